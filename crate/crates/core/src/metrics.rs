//! Error metrics between ground-truth and predicted positive scalars.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    /// `|m - m_hat|`
    pub ade: f64,
    /// `|ln m - ln m_hat|`
    pub alde: f64,
    /// `|(m - m_hat) / m|`
    pub ape: f64,
    /// `min(m / m_hat, m_hat / m)`, higher is better.
    pub mnre: f64,
}

pub fn metrics(truth: f64, prediction: f64) -> Result<ItemMetrics> {
    if !(truth > 0.0 && truth.is_finite() && prediction > 0.0 && prediction.is_finite()) {
        return Err(Error::domain(format!(
            "metrics need positive finite values, got truth {truth}, prediction {prediction}"
        )));
    }
    Ok(ItemMetrics {
        ade: (truth - prediction).abs(),
        alde: (truth.ln() - prediction.ln()).abs(),
        ape: ((truth - prediction) / truth).abs(),
        mnre: (truth / prediction).min(prediction / truth),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub ground_truth: f64,
    pub prediction: f64,
    #[serde(flatten)]
    pub metrics: ItemMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ade: f64,
    pub alde: f64,
    pub ape: f64,
    pub mnre: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub items: Vec<EvalItem>,
}

/// Per-item metrics and their unweighted means, in input order.
pub fn evaluate<'a>(pairs: impl IntoIterator<Item = (&'a str, f64, f64)>) -> Result<MetricReport> {
    let mut items = Vec::new();
    for (id, truth, prediction) in pairs {
        let m = metrics(truth, prediction).map_err(|e| Error::domain(format!("item `{id}`: {e}")))?;
        items.push(EvalItem {
            id: id.to_owned(),
            ground_truth: truth,
            prediction,
            metrics: m,
        });
    }
    if items.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty set of pairs"));
    }
    let n = items.len() as f64;
    let mean = |f: fn(&ItemMetrics) -> f64| items.iter().map(|i| f(&i.metrics)).sum::<f64>() / n;
    Ok(MetricReport {
        ade: mean(|m| m.ade),
        alde: mean(|m| m.alde),
        ape: mean(|m| m.ape),
        mnre: mean(|m| m.mnre),
        n: items.len(),
        items,
    })
}

#[derive(Debug, Deserialize)]
struct PairRow {
    id: String,
    ground_truth: f64,
    prediction: f64,
}

/// Reads `id,ground_truth,prediction` rows. Errors carry the file line.
pub fn read_pairs_csv<R: Read>(reader: R) -> Result<Vec<(String, f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format("pairs CSV header", e.to_string()))?
        .clone();
    for need in ["id", "ground_truth", "prediction"] {
        if !headers.iter().any(|h| h == need) {
            return Err(Error::format("pairs CSV header", format!("missing column `{need}`")));
        }
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<PairRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::format(format!("pairs CSV line {line}"), e.to_string())
        })?;
        out.push((row.id, row.ground_truth, row.prediction));
    }
    Ok(out)
}

pub fn write_items_csv<W: Write>(writer: W, report: &MetricReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::format("metrics CSV output", e.to_string());
    w.write_record(["id", "ground_truth", "prediction", "ade", "alde", "ape", "mnre"])
        .map_err(io)?;
    for item in &report.items {
        let m = &item.metrics;
        w.write_record([
            item.id.clone(),
            item.ground_truth.to_string(),
            item.prediction.to_string(),
            m.ade.to_string(),
            m.alde.to_string(),
            m.ape.to_string(),
            m.mnre.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<metrics output>", e))
}
