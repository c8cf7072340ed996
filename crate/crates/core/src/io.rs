//! CSV ingestion and emission.
//!
//! Aggregate files carry `geo`, one `x_<cat>` share per category, `n`,
//! optional `n_<cat>` counts, then either `y_<out>` means or `m_<out>`
//! counts, then `z_<name>` covariates. Micro files carry `geo`, `cat` and
//! either one-hot `y_<out>` columns or a single `y`. Lines starting with `#`
//! are comments.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{
    AggregateTable, CellMeans, GroundTruth, MicroData, MicroRecord, OutcomeKind, TableParts, INGEST_TOLERANCE,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum CsvSchema {
    Aggregate,
    /// Category indices in the `cat` column refer to these names.
    Micro { categories: Vec<String> },
}

#[derive(Debug, Clone)]
pub enum Loaded {
    Aggregate(AggregateTable),
    Micro(MicroData),
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Loaded> {
    let file = File::open(path)?;
    match schema {
        CsvSchema::Aggregate => read_aggregate(file).map(Loaded::Aggregate),
        CsvSchema::Micro { categories } => read_micro(file, categories.clone()).map(Loaded::Micro),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn parse_num(row: usize, column: &str, value: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| Error::NonNumeric {
        row,
        column: column.to_string(),
        value: value.to_string(),
    })
}

fn parse_count(row: usize, column: &str, value: &str) -> Result<u64> {
    let v = parse_num(row, column, value)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::InvalidData(format!("row {row}, column `{column}`: count must be a nonnegative integer")));
    }
    Ok(v as u64)
}

pub fn read_aggregate<R: Read>(input: R) -> Result<AggregateTable> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let prefixed = |prefix: &str| -> Vec<(usize, String)> {
        headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(prefix).map(|s| (i, s.to_string())))
            .collect()
    };
    let geo_col = find("geo").ok_or_else(|| Error::MissingColumn("geo".into()))?;
    let n_col = find("n").ok_or_else(|| Error::MissingColumn("n".into()))?;
    let x_cols = prefixed("x_");
    if x_cols.is_empty() {
        return Err(Error::MissingColumn("x_<category>".into()));
    }
    let ncat_cols = prefixed("n_");
    let y_cols = prefixed("y_");
    let m_cols = prefixed("m_");
    let z_cols = prefixed("z_");
    if y_cols.is_empty() && m_cols.is_empty() {
        return Err(Error::MissingColumn("y_<outcome> or m_<outcome>".into()));
    }
    let category_names: Vec<String> = x_cols.iter().map(|(_, s)| s.clone()).collect();
    let ncat_order: Option<Vec<usize>> = if ncat_cols.is_empty() {
        None
    } else {
        Some(
            category_names
                .iter()
                .map(|c| {
                    ncat_cols
                        .iter()
                        .find(|(_, s)| s == c)
                        .map(|(i, _)| *i)
                        .ok_or_else(|| Error::MissingColumn(format!("n_{c}")))
                })
                .collect::<Result<_>>()?,
        )
    };
    let outcome_names: Vec<String> =
        if !m_cols.is_empty() { m_cols.iter() } else { y_cols.iter() }.map(|(_, s)| s.clone()).collect();

    let mut geos = Vec::new();
    let mut shares = Vec::new();
    let mut population = Vec::new();
    let mut ncat = Vec::new();
    let mut means = Vec::new();
    let mut counts: Vec<Vec<u64>> = Vec::new();
    let mut z = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        geos.push(field(geo_col).to_string());
        for (c, name) in &x_cols {
            shares.push(parse_num(row, &format!("x_{name}"), field(*c))?);
        }
        population.push(parse_num(row, "n", field(n_col))?);
        if let Some(order) = &ncat_order {
            for &c in order {
                ncat.push(parse_num(row, &headers[c], field(c))?);
            }
        }
        if !m_cols.is_empty() {
            counts.push(m_cols.iter().map(|(c, _)| parse_count(row, &headers[*c], field(*c))).collect::<Result<_>>()?);
        } else {
            for (c, _) in &y_cols {
                means.push(parse_num(row, &headers[*c], field(*c))?);
            }
        }
        for (c, _) in &z_cols {
            z.push(parse_num(row, &headers[*c], field(*c))?);
        }
    }
    let g = geos.len();
    let k = category_names.len();
    let j = outcome_names.len();
    AggregateTable::from_parts(
        TableParts {
            geos,
            category_names,
            outcome_names,
            covariate_names: z_cols.iter().map(|(_, s)| s.clone()).collect(),
            shares: Some(DMatrix::from_row_slice(g, k, &shares)),
            outcomes: (!means.is_empty()).then(|| DMatrix::from_row_slice(g, j, &means)),
            counts: (!counts.is_empty()).then_some(counts),
            population,
            category_counts: ncat_order.map(|_| DMatrix::from_row_slice(g, k, &ncat)),
            covariates: Some(DMatrix::from_row_slice(g, z_cols.len(), &z)),
        },
        INGEST_TOLERANCE,
    )
}

pub fn read_micro<R: Read>(input: R, categories: Vec<String>) -> Result<MicroData> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let geo_col = find("geo").ok_or_else(|| Error::MissingColumn("geo".into()))?;
    let cat_col = find("cat").ok_or_else(|| Error::MissingColumn("cat".into()))?;
    let y_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("y_").map(|s| (i, s.to_string())))
        .collect();
    let (y_cols, kind) = match (find("y"), y_cols.len()) {
        (Some(c), 0) => (vec![(c, "y".to_string())], OutcomeKind::Continuous),
        (None, 0) => return Err(Error::MissingColumn("y or y_<outcome>".into())),
        (_, 1) => (y_cols, OutcomeKind::Continuous),
        _ => (y_cols, OutcomeKind::Categorical),
    };
    let k = categories.len();
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let cat = parse_num(row, "cat", field(cat_col))?;
        if cat < 0.0 || cat.fract() != 0.0 {
            return Err(Error::InvalidData(format!("row {row}: category index must be a nonnegative integer")));
        }
        let category = cat as usize;
        if category >= k {
            return Err(Error::CategoryOutOfRange { row, index: category, k });
        }
        let outcome = y_cols.iter().map(|(c, _)| parse_num(row, &headers[*c], field(*c))).collect::<Result<Vec<_>>>()?;
        if kind == OutcomeKind::Continuous && !(0.0..=1.0).contains(&outcome[0]) {
            return Err(Error::InvalidData(format!("row {row}: scalar outcome must lie in [0, 1]")));
        }
        records.push(MicroRecord { geo: field(geo_col).to_string(), category, outcome });
    }
    MicroData::new(categories, y_cols.into_iter().map(|(_, s)| s).collect(), kind, records)
}

/// Writes a table in the aggregate CSV layout, with full round-trip precision.
pub fn write_aggregate<W: Write>(table: &AggregateTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["geo".to_string()];
    header.extend(table.category_names().iter().map(|c| format!("x_{c}")));
    header.push("n".into());
    if table.has_category_counts() {
        header.extend(table.category_names().iter().map(|c| format!("n_{c}")));
    }
    let with_counts = table.counts().is_some();
    let prefix = if with_counts { "m_" } else { "y_" };
    header.extend(table.outcome_names().iter().map(|o| format!("{prefix}{o}")));
    header.extend(table.covariate_names().iter().map(|z| format!("z_{z}")));
    w.write_record(&header)?;
    let ncat = table.category_counts();
    for g in 0..table.n_geos() {
        let mut row = vec![table.geos()[g].clone()];
        row.extend(table.shares().row(g).iter().map(|v| v.to_string()));
        row.push(table.population()[g].to_string());
        if table.has_category_counts() {
            row.extend(ncat.row(g).iter().map(|v| v.to_string()));
        }
        match table.counts() {
            Some(m) => row.extend(m[g].iter().map(|v| v.to_string())),
            None => row.extend(table.outcomes().row(g).iter().map(|v| v.to_string())),
        }
        row.extend(table.covariates().row(g).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes ground truth in long format: `level,geo,outcome,category,value`,
/// with `NA` for undefined cells.
pub fn write_truth<W: Write>(table: &AggregateTable, truth: &GroundTruth, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "geo", "outcome", "category", "value"])?;
    let mut emit = |level: &str, geo: &str, cells: &CellMeans| -> Result<()> {
        for (k, cat) in table.category_names().iter().enumerate() {
            for (j, outc) in table.outcome_names().iter().enumerate() {
                let v = cells.get(j, k).map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
                w.write_record([level, geo, outc.as_str(), cat.as_str(), v.as_str()])?;
            }
        }
        Ok(())
    };
    emit("global", "", &truth.global)?;
    for (g, local) in truth.local.iter().enumerate() {
        emit("local", &table.geos()[g], local)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads ground truth written by [`write_truth`], aligned to `table`'s geographies and names.
pub fn read_truth<R: Read>(table: &AggregateTable, input: R) -> Result<GroundTruth> {
    let k = table.n_categories();
    let j = table.n_outcomes();
    let empty = || vec![vec![None::<f64>; j]; k];
    let mut global = empty();
    let mut local = vec![empty(); table.n_geos()];
    let geo_index: std::collections::HashMap<&str, usize> =
        table.geos().iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut rdr = reader(input);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let jj = table
            .outcome_names()
            .iter()
            .position(|o| o == get(2))
            .ok_or_else(|| Error::InvalidData(format!("truth row {row}: unknown outcome `{}`", get(2))))?;
        let kk = table
            .category_names()
            .iter()
            .position(|c| c == get(3))
            .ok_or_else(|| Error::InvalidData(format!("truth row {row}: unknown category `{}`", get(3))))?;
        let value = match get(4) {
            "NA" => None,
            v => Some(parse_num(row, "value", v)?),
        };
        match get(0) {
            "global" => global[kk][jj] = value,
            "local" => {
                let g = *geo_index
                    .get(get(1))
                    .ok_or_else(|| Error::InvalidData(format!("truth row {row}: unknown geography `{}`", get(1))))?;
                local[g][kk][jj] = value;
            }
            other => return Err(Error::InvalidData(format!("truth row {row}: unknown level `{other}`"))),
        }
    }
    let to_cells = |cols: Vec<Vec<Option<f64>>>| {
        CellMeans::new(cols.into_iter().map(|c| c.into_iter().collect::<Option<Vec<f64>>>()).collect())
    };
    let ncat = table.category_counts();
    Ok(GroundTruth {
        global: to_cells(global),
        local: local.into_iter().map(to_cells).collect(),
        category_totals: (0..k).map(|kk| ncat.column(kk).sum()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const AGG: &str = "geo,x_white,x_black,n,y_dem\n\
                       p1,0.8,0.2,100,0.3\n\
                       p2,0.5,0.5,200,0.45\n";

    #[test]
    fn aggregate_schema() {
        let t = read_aggregate(AGG.as_bytes()).unwrap();
        assert_eq!(t.n_geos(), 2);
        assert_eq!(t.category_names(), ["white", "black"]);
        assert_eq!(t.outcome_names(), ["dem"]);
        assert_eq!(t.outcomes()[(1, 0)], 0.45);
        let mut buf = Vec::new();
        write_aggregate(&t, &mut buf).unwrap();
        let back = read_aggregate(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn micro_category_out_of_range_cites_row() {
        let csv = "geo,cat,y\na,0,1\na,1,0\nb,2,1\n";
        let err = read_micro(csv.as_bytes(), vec!["w".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, Error::CategoryOutOfRange { row: 3, index: 2, k: 2 }), "{err}");
    }

    #[test]
    fn share_sum_off_by_two_thousandths_names_geography() {
        let csv = "geo,x_a,x_b,n,y_o\nok,0.5,0.5,10,0.5\nbad,0.5,0.502,10,0.5\n";
        let err = read_aggregate(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidGeography { ref geo, .. } if geo == "bad"), "{err}");
        // Inside the 1e-6 ingestion tolerance.
        let csv = "geo,x_a,x_b,n,y_o\nok,0.5,0.5000005,10,0.5\n";
        assert!(read_aggregate(csv.as_bytes()).is_ok());
    }

    #[test]
    fn missing_and_non_numeric_columns() {
        let err = read_aggregate("geo,x_a,x_b,y_o\np,0.5,0.5,0.1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "n"));
        let err = read_aggregate("geo,x_a,x_b,n,y_o\np,0.5,abc,1,0.1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 1, .. }));
    }

    #[test]
    fn counts_and_covariates() {
        let csv = "geo,x_a,x_b,n,n_a,n_b,m_d,m_r,z_inc\np,0.25,0.75,4,1,3,1,3,2.5\n";
        let t = read_aggregate(csv.as_bytes()).unwrap();
        assert_eq!(t.counts().unwrap()[0], vec![1, 3]);
        assert_eq!(t.outcomes()[(0, 0)], 0.25);
        assert_eq!(t.covariate("inc").unwrap(), vec![2.5]);
    }
}
