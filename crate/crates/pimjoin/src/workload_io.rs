//! Workload directories: one headered CSV per table plus `manifest.json`
//! echoing the generating spec.

use std::fs;
use std::path::Path;

use pimjoin_core::workload::{JoinSpec, Table, Workload, WorkloadSpec};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub name: String,
    pub file: String,
    pub rows: u64,
    pub raw_row_bytes: u32,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: WorkloadSpec,
    pub workload_hash: u64,
    pub tables: Vec<TableEntry>,
    pub joins: Vec<JoinSpec>,
}

pub fn write_table_csv(table: &Table, path: &Path) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(table.columns.iter().map(|c| c.name.as_str()))?;
    let mut row = vec![String::new(); table.columns.len()];
    for i in 0..table.len() {
        for (cell, col) in row.iter_mut().zip(&table.columns) {
            cell.clear();
            cell.push_str(&col.values[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))?;
    Ok(())
}

pub fn read_table_csv(name: &str, raw_row_bytes: u32, path: &Path) -> AppResult<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut columns: Vec<Vec<u64>> = vec![Vec::new(); headers.len()];
    for record in r.records() {
        let record = record?;
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            col.push(cell.parse().map_err(|_| {
                AppError::Usage(format!("{}: {cell:?} is not an unsigned integer", path.display()))
            })?);
        }
    }
    Ok(headers
        .iter()
        .zip(columns)
        .fold(Table::new(name, raw_row_bytes), |t, (h, v)| t.with_column(h, v)))
}

pub fn write_dir(workload: &Workload, dir: &Path) -> AppResult<Manifest> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let mut tables = Vec::new();
    for t in &workload.tables {
        let file = format!("{}.csv", t.name);
        write_table_csv(t, &dir.join(&file))?;
        tables.push(TableEntry {
            name: t.name.clone(),
            file,
            rows: t.len() as u64,
            raw_row_bytes: t.raw_row_bytes,
            columns: t.columns.iter().map(|c| c.name.clone()).collect(),
        });
    }
    let manifest = Manifest {
        spec: workload.spec,
        workload_hash: workload.hash(),
        tables,
        joins: workload.joins.clone(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| AppError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_dir(dir: &Path) -> AppResult<Workload> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.workload_hash != manifest.spec.hash() {
        return Err(AppError::Usage(format!(
            "{}: recorded workload hash does not match its spec",
            path.display()
        )));
    }
    let mut tables = Vec::new();
    for entry in &manifest.tables {
        let table = read_table_csv(&entry.name, entry.raw_row_bytes, &dir.join(&entry.file))?;
        if table.len() as u64 != entry.rows {
            return Err(AppError::Usage(format!(
                "{}: {} rows, manifest says {}",
                entry.file,
                table.len(),
                entry.rows
            )));
        }
        tables.push(table);
    }
    Ok(Workload::new(manifest.spec, tables, manifest.joins))
}
