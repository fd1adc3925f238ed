//! `[[expect]]` assertions evaluated against report JSON.

use serde::Serialize;
use serde_json::Value;

use crate::config::Expectation;
use crate::pipeline::Artifacts;

#[derive(Debug, Serialize)]
pub struct Outcome {
    pub report: String,
    pub path: String,
    pub actual: Value,
    pub pass: bool,
    pub detail: String,
}

/// Dotted path lookup; numeric segments index arrays.
pub fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').filter(|s| !s.is_empty()).try_fold(v, |cur, seg| match cur {
        Value::Object(m) => m.get(seg),
        Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get(i)),
        _ => None,
    })
}

fn check(e: &Expectation, actual: &Value) -> Result<(), String> {
    if let Some(want) = &e.equals {
        let same = match (want.as_f64(), actual.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => want == actual,
        };
        if !same {
            return Err(format!("expected {want}, got {actual}"));
        }
    }
    if e.min.is_none() && e.max.is_none() && e.near.is_none() {
        return Ok(());
    }
    // serde_json writes non-finite floats as null
    let x = actual.as_f64().ok_or_else(|| format!("{actual} is not a finite number"))?;
    if let Some(lo) = e.min {
        if x < lo {
            return Err(format!("{x:e} below min {lo:e}"));
        }
    }
    if let Some(hi) = e.max {
        if x > hi {
            return Err(format!("{x:e} above max {hi:e}"));
        }
    }
    if let Some(target) = e.near {
        let d = (x - target).abs();
        let ok_abs = e.abs.is_some_and(|t| d <= t);
        let ok_rel = e.rel.is_some_and(|t| d <= t * target.abs());
        if !(ok_abs || ok_rel) {
            return Err(format!("{x:e} not near {target:e} (|diff| = {d:e})"));
        }
    }
    Ok(())
}

pub fn evaluate(expects: &[Expectation], art: &Artifacts) -> Vec<Outcome> {
    expects
        .iter()
        .map(|e| {
            let report = e.report.clone().unwrap_or_else(|| "report".into());
            let found = art.lookup(&report).map(|r| lookup(r, &e.path));
            let (actual, res) = match found {
                None => (Value::Null, Err(format!("no report `{report}`"))),
                Some(None) => (Value::Null, Err(format!("no value at `{}`", e.path))),
                Some(Some(v)) => (v.clone(), check(e, v)),
            };
            Outcome {
                report,
                path: e.path.clone(),
                actual,
                pass: res.is_ok(),
                detail: res.err().unwrap_or_default(),
            }
        })
        .collect()
}
