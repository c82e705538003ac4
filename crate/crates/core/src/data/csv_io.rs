use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, FeatureSchema, Instance};
use crate::error::{Error, Result};

/// Reads a raw (unnormalized) dataset; categoricals are label-encoded in
/// schema declaration order.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Data("CSV file is empty".into()));
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|f| column(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let label_col = column(&schema.label)?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // Header is line 1, so data row i sits on line i + 2.
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let mut values = Vec::with_capacity(schema.len());
        for (f, &c) in schema.features.iter().zip(&feature_cols) {
            let raw = record.get(c).unwrap_or("").trim();
            let v = if f.is_categorical() {
                f.category_index(raw).ok_or_else(|| {
                    Error::Data(format!("line {line}: unknown category `{raw}` for feature `{}`", f.name))
                })? as f64
            } else {
                let v: f64 = raw.parse().map_err(|_| {
                    Error::Data(format!("line {line}: `{raw}` is not a number (feature `{}`)", f.name))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("line {line}: non-finite value for `{}`", f.name)));
                }
                v
            };
            values.push(v);
        }
        let raw_label = record.get(label_col).unwrap_or("").trim();
        let label = match raw_label {
            "0" | "0.0" => 0,
            "1" | "1.0" => 1,
            other => {
                return Err(Error::Data(format!("line {line}: label `{other}` is not 0 or 1")));
            }
        };
        rows.push(Instance::new(values));
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Data("CSV file has no data rows".into()));
    }
    Dataset::new(schema.clone(), rows, labels)
}

/// Writes raw values back out: categoricals as their category strings,
/// continuous values with shortest round-trip formatting.
pub fn write_csv<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let schema = &dataset.schema;
    let mut header: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    header.push(&schema.label);
    wtr.write_record(&header).map_err(csv_err)?;
    for (row, label) in dataset.rows.iter().zip(&dataset.labels) {
        let mut fields: Vec<String> = schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| {
                if f.is_categorical() {
                    f.categories[row.category(j)].clone()
                } else {
                    format!("{}", row.get(j))
                }
            })
            .collect();
        fields.push(label.to_string());
        wtr.write_record(&fields).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn save_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), dataset)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io {
            path: "<csv writer>".into(),
            source: io,
        },
        other => Error::Parse(format!("{other:?}")),
    }
}
