//! Plot-ready CSV outputs. Numbers use the shortest representation that
//! parses back to the same `f64`.

use std::io::Write;

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::eval::PointRecord;
use crate::experiment::SweepRow;

fn feature_header(features: &[Sample]) -> Result<(usize, Vec<String>)> {
    let dim = features.first().map(Vec::len).unwrap_or(0);
    if let Some(bad) = features.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
    }
    Ok((dim, (1..=dim).map(|i| format!("x{i}")).collect()))
}

fn row_start(x: &[f64]) -> Vec<String> {
    x.iter().map(f64::to_string).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|p| p.to_string()).unwrap_or_default()
}

/// `x1..xd,score,prob,class`.
pub fn write_predictions_csv<W: Write>(
    writer: W,
    features: &[Sample],
    scores: &[f64],
    probs: &[f64],
    classes: &[i8],
) -> Result<()> {
    let n = features.len();
    if scores.len() != n || probs.len() != n || classes.len() != n {
        return Err(Error::InvalidArgument("prediction columns differ in length".into()));
    }
    let (_, mut header) = feature_header(features)?;
    header.extend(["score", "prob", "class"].map(String::from));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for i in 0..n {
        let mut rec = row_start(&features[i]);
        rec.extend([scores[i].to_string(), probs[i].to_string(), classes[i].to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `x1..xd,true_p,pred_p,pred_y`; `true_p` is empty when unknown.
pub fn write_curves_csv<W: Write>(writer: W, features: &[Sample], records: &[PointRecord]) -> Result<()> {
    if records.len() != features.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), found: records.len() });
    }
    let (_, mut header) = feature_header(features)?;
    header.extend(["true_p", "pred_p", "pred_y"].map(String::from));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for (x, r) in features.iter().zip(records) {
        let mut rec = row_start(x);
        rec.extend([opt(r.true_p), r.predicted_p.to_string(), r.predicted_y.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Both methods side by side on one test set:
/// `x1..xd,true_p,psvm_p,platt_p,psvm_y,csvm_y`.
pub fn write_comparison_csv<W: Write>(
    writer: W,
    features: &[Sample],
    psvm: &[PointRecord],
    csvm: &[PointRecord],
) -> Result<()> {
    if psvm.len() != features.len() || csvm.len() != features.len() {
        return Err(Error::InvalidArgument("comparison columns differ in length".into()));
    }
    let (_, mut header) = feature_header(features)?;
    header.extend(["true_p", "psvm_p", "platt_p", "psvm_y", "csvm_y"].map(String::from));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for ((x, p), c) in features.iter().zip(psvm).zip(csvm) {
        let mut rec = row_start(x);
        rec.extend([
            opt(p.true_p),
            p.predicted_p.to_string(),
            c.predicted_p.to_string(),
            p.predicted_y.to_string(),
            c.predicted_y.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `amplitude,method,acc_mean,acc_std,kl_mean,kl_std`.
pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["amplitude", "method", "acc_mean", "acc_std", "kl_mean", "kl_std"])?;
    for r in rows {
        let method = match r.method {
            crate::model::Method::Psvm => "psvm",
            crate::model::Method::Csvm => "csvm",
        };
        w.write_record([
            r.amplitude.to_string(),
            method.to_string(),
            r.acc_mean.to_string(),
            r.acc_std.to_string(),
            r.kl_mean.to_string(),
            r.kl_std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
