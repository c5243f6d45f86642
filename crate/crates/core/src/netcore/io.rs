use std::io::{Read, Write};

use super::{NetworkData, RawEdge};
use crate::error::{Error, Result};

/// Column mapping for edge-list CSV files.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub worker: String,
    pub firm: String,
    pub period: String,
    pub y: String,
    /// Covariate columns in order. `None` takes every remaining column in header order.
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            worker: "worker_id".into(),
            firm: "firm_id".into(),
            period: "period".into(),
            y: "y".into(),
            covariates: None,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_int(field: &str, row: usize, column: &str) -> Result<i64> {
    field.trim().parse().map_err(|_| Error::NonNumeric {
        row,
        column: column.to_string(),
        value: field.to_string(),
    })
}

fn parse_real(field: &str, row: usize, column: &str) -> Result<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            column: column.to_string(),
            value: field.to_string(),
        }),
    }
}

/// Reads a headed CSV edge list. Row numbers in errors are 1-based file lines.
pub fn load_edge_list<R: Read>(source: R, schema: &CsvSchema) -> Result<NetworkData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let wi = column(&headers, &schema.worker)?;
    let fi = column(&headers, &schema.firm)?;
    let pi = column(&headers, &schema.period)?;
    let yi = column(&headers, &schema.y)?;
    let cov_names: Vec<String> = match &schema.covariates {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![wi, fi, pi, yi].contains(i))
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let cov_idx = cov_names
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;

    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let x = cov_idx
            .iter()
            .zip(&cov_names)
            .map(|(&i, name)| parse_real(get(i), row, name))
            .collect::<Result<Vec<_>>>()?;
        raw.push(RawEdge {
            worker: parse_int(get(wi), row, &schema.worker)?,
            firm: parse_int(get(fi), row, &schema.firm)?,
            period: parse_int(get(pi), row, &schema.period)?,
            y: parse_real(get(yi), row, &schema.y)?,
            x,
            row,
        });
    }
    NetworkData::from_raw(raw, cov_names)
}

/// Writes the edge list with original ids in the default schema. Reals use
/// the shortest representation that parses back to the same value.
pub fn write_edge_list<W: Write>(net: &NetworkData, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec![
        "worker_id".to_string(),
        "firm_id".to_string(),
        "period".to_string(),
        "y".to_string(),
    ];
    header.extend(net.ids.covariate_names.iter().cloned());
    writer.write_record(&header)?;
    for e in &net.edges {
        let mut rec = vec![
            net.ids.workers[e.worker].to_string(),
            net.ids.firms[e.firm].to_string(),
            net.ids.periods[e.period].to_string(),
            format!("{:?}", e.y),
        ];
        rec.extend(e.x.iter().map(|v| format!("{v:?}")));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
