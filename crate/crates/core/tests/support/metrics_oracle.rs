// SPDX-License-Identifier: Apache-2.0

//! Brute-force per-sample recount of classification and regression metrics,
//! written independently of the library.

use edgespace_core::ml::metrics::{classification_metrics, regression_metrics};

/// Per-sample recount, written independently of the library.
pub fn recount(preds: &[usize], labels: &[usize]) -> (Vec<usize>, Vec<[f64; 4]>, [f64; 4], f64) {
    let mut classes: Vec<usize> = preds.iter().chain(labels).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let n = labels.len() as f64;
    let mut rows = Vec::new();
    let mut supports = Vec::new();
    for &c in &classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        let mut tn = 0.0;
        for i in 0..labels.len() {
            let p = preds[i] == c;
            let l = labels[i] == c;
            if p && l {
                tp += 1.0;
            } else if p {
                fp += 1.0;
            } else if l {
                fn_ += 1.0;
            } else {
                tn += 1.0;
            }
        }
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        rows.push([(tp + tn) / n, prec, rec, f1]);
        supports.push((tp + fn_) as usize);
    }
    let total: usize = supports.iter().sum();
    let mut weighted = [0.0; 4];
    for (r, &s) in rows.iter().zip(&supports) {
        for k in 0..4 {
            weighted[k] += r[k] * s as f64 / total as f64;
        }
    }
    let acc = preds.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / n;
    (supports, rows, weighted, acc)
}

/// Library metrics against the recount, within `tol`.
pub fn check_classification(preds: &[usize], labels: &[usize], tol: f64) -> Result<(), String> {
    let r = classification_metrics(preds, labels).map_err(|e| e.to_string())?;
    let (supports, rows, weighted, acc) = recount(preds, labels);
    if (r.accuracy - acc).abs() >= tol {
        return Err(format!("accuracy {} vs {acc}", r.accuracy));
    }
    if r.per_class.len() != rows.len() {
        return Err(format!("{} classes vs {}", r.per_class.len(), rows.len()));
    }
    for (i, m) in r.per_class.iter().enumerate() {
        if m.support != supports[i] {
            return Err(format!("class {i}: support {} vs {}", m.support, supports[i]));
        }
        for (got, want) in [m.accuracy, m.precision, m.recall, m.f1].iter().zip(rows[i]) {
            if (got - want).abs() >= tol {
                return Err(format!("class {i}: {got} vs {want}"));
            }
        }
    }
    let w = &r.weighted;
    for (got, want) in [w.accuracy, w.precision, w.recall, w.f1].iter().zip(weighted) {
        if (got - want).abs() >= tol {
            return Err(format!("weighted: {got} vs {want}"));
        }
    }
    Ok(())
}

pub fn check_regression(p: &[f64], y: &[f64], tol: f64) -> Result<(), String> {
    let r = regression_metrics(p, y).map_err(|e| e.to_string())?;
    let n = p.len() as f64;
    let mae = p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let rmse = (p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt();
    let used: Vec<f64> = p.iter().zip(y).filter(|(_, b)| b.abs() >= 1e-9).map(|(a, b)| ((a - b) / b).abs()).collect();
    if (r.mae - mae).abs() >= tol || (r.rmse - rmse).abs() >= tol {
        return Err(format!("mae {} vs {mae}, rmse {} vs {rmse}", r.mae, r.rmse));
    }
    if r.count != p.len() || r.mape_skipped != p.len() - used.len() {
        return Err(format!("count {} skipped {}", r.count, r.mape_skipped));
    }
    let mape = (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64);
    match (r.mape, mape) {
        (None, None) => {}
        (Some(a), Some(b)) if (a - b).abs() < tol => {}
        (a, b) => return Err(format!("mape {a:?} vs {b:?}")),
    }
    Ok(())
}
