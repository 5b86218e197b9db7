use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use super::{FeatureKind, RawTable, Schema};
use crate::error::{Error, Result};

/// Reads a comma-separated master table, keeping only the schema's columns.
///
/// Columns are matched by `source_name`, in any order; extra columns are
/// ignored. Empty cells, unparseable numbers and unknown category tokens all
/// become nulls.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let header = reader.headers()?.clone();
    let mut positions: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if positions.insert(name.trim(), i).is_some() {
            return Err(Error::DuplicateColumn(name.trim().to_string()));
        }
    }
    let columns = schema
        .iter()
        .map(|f| {
            positions
                .get(f.source_name.as_str())
                .copied()
                .ok_or_else(|| Error::MissingColumn(f.source_name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = schema
            .iter()
            .zip(&columns)
            .map(|(f, &c)| {
                let token = record.get(c).unwrap_or("").trim();
                if token.is_empty() {
                    return None;
                }
                match f.kind {
                    FeatureKind::Numeric => token.parse::<f64>().ok().filter(|v| v.is_finite()),
                    FeatureKind::Categorical => f.category_index(token).map(|i| i as f64),
                }
            })
            .collect();
        rows.push(row);
    }
    Ok(RawTable {
        schema: schema.clone(),
        rows,
    })
}

/// Writes a table with `source_name` headers; nulls become empty fields.
pub fn write_csv(table: &RawTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(table.schema.iter().map(|f| f.source_name.as_str()))?;
    for row in &table.rows {
        let cells: Vec<String> = table
            .schema
            .iter()
            .zip(row)
            .map(|(f, cell)| match cell {
                None => String::new(),
                Some(v) => match f.kind {
                    FeatureKind::Numeric => format!("{v}"),
                    FeatureKind::Categorical => f.categories[*v as usize].clone(),
                },
            })
            .collect();
        writer.write_record(&cells)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
