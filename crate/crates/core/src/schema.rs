//! Star-schema ingestion: SSB-lite generator, CSV loading with dictionary
//! encoding, and the pre-join into one wide relation.
//!
//! Dimension keys carry the same name as the fact foreign key that
//! references them (`partkey` in both `lineorder` and `part`), so a key
//! predicate reads the same on the star and on the wide relation. Non-key
//! dimension attributes appear in the wide relation as `<dim>.<attr>`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{self, IsaError, Operand, PredicateExpr};
use crate::layout::PimMemory;
use crate::oracle::eval_predicate;
use crate::relation::{pow2_width, AttributeSpec, HostTable};

pub const FACT_ROWS_PER_SCALE: usize = 6000;
pub const DATE_ROWS: usize = 365;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: row {row}, column `{column}`: cannot parse `{value}`")]
    Unparsable { file: String, row: usize, column: String, value: String },
    #[error("{relation}: row {row} references missing {dimension} key {value} via `{column}`")]
    DanglingKey { relation: String, row: usize, column: String, dimension: String, value: i64 },
    #[error("dimension `{dimension}`: duplicate key {value}")]
    DuplicateKey { dimension: String, value: i64 },
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("value {value} does not fit attribute `{attr}`")]
    ValueOverflow { attr: String, value: i64 },
    #[error("{0}")]
    Io(String),
    #[error("{file}: {message}")]
    Csv { file: String, message: String },
    #[error(transparent)]
    Isa(#[from] IsaError),
}

impl From<std::io::Error> for SchemaError {
    fn from(e: std::io::Error) -> Self {
        SchemaError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub dimension: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub table: HostTable,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarSchema {
    pub fact: HostTable,
    pub foreign_keys: Vec<ForeignKey>,
    pub dimensions: Vec<Dimension>,
    /// `relation.attr` → code-indexed source strings.
    pub dictionaries: BTreeMap<String, Vec<String>>,
}

impl StarSchema {
    pub fn dimension(&self, name: &str) -> Result<&Dimension, SchemaError> {
        self.dimensions.iter().find(|d| d.table.name == name).ok_or_else(|| SchemaError::UnknownDimension(name.into()))
    }

    /// Checks key uniqueness and that every foreign key resolves.
    pub fn check_integrity(&self) -> Result<(), SchemaError> {
        for fk in &self.foreign_keys {
            let dim = self.dimension(&fk.dimension)?;
            let keys = key_index(dim)?;
            let col = self.fact.index_of(&fk.column).ok_or_else(|| SchemaError::UnknownAttribute(fk.column.clone()))?;
            for (row, r) in self.fact.rows.iter().enumerate() {
                if !keys.contains_key(&r[col]) {
                    return Err(SchemaError::DanglingKey {
                        relation: self.fact.name.clone(),
                        row,
                        column: fk.column.clone(),
                        dimension: fk.dimension.clone(),
                        value: r[col],
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dictionaries_json(&self) -> String {
        serde_json::to_string_pretty(&self.dictionaries).expect("dictionaries serialize")
    }

    /// Descriptor matching this star, for writing next to its CSV files.
    pub fn descriptor(&self) -> StarDescriptor {
        let rel = |t: &HostTable, key: Option<&str>| RelationDescriptor {
            name: t.name.clone(),
            file: format!("{}.csv", t.name),
            key: key.map(str::to_string),
            attributes: t
                .schema
                .iter()
                .map(|a| AttrDescriptor {
                    name: a.name.clone(),
                    kind: if self.dictionaries.contains_key(&format!("{}.{}", t.name, a.name)) {
                        ColumnKind::String
                    } else {
                        ColumnKind::Int
                    },
                    width: Some(a.width),
                    signed: Some(a.signed),
                })
                .collect(),
        };
        StarDescriptor {
            fact: rel(&self.fact, None),
            foreign_keys: self.foreign_keys.clone(),
            dimensions: self.dimensions.iter().map(|d| rel(&d.table, Some(&d.key))).collect(),
        }
    }

    /// Writes one CSV per relation plus `schema.json` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), SchemaError> {
        fs::create_dir_all(dir)?;
        for t in std::iter::once(&self.fact).chain(self.dimensions.iter().map(|d| &d.table)) {
            let file = format!("{}.csv", t.name);
            let mut w = csv::Writer::from_path(dir.join(&file)).map_err(|e| csv_err(&file, e))?;
            w.write_record(t.schema.iter().map(|a| a.name.as_str())).map_err(|e| csv_err(&file, e))?;
            for r in &t.rows {
                let cells: Vec<String> = t
                    .schema
                    .iter()
                    .zip(r)
                    .map(|(a, v)| match self.dictionaries.get(&format!("{}.{}", t.name, a.name)) {
                        Some(dict) => dict[*v as usize].clone(),
                        None => v.to_string(),
                    })
                    .collect();
                w.write_record(&cells).map_err(|e| csv_err(&file, e))?;
            }
            w.flush()?;
        }
        let desc = serde_json::to_string_pretty(&self.descriptor()).expect("descriptor serializes");
        fs::write(dir.join("schema.json"), desc + "\n")?;
        Ok(())
    }
}

fn csv_err(file: &str, e: csv::Error) -> SchemaError {
    SchemaError::Csv { file: file.to_string(), message: e.to_string() }
}

fn key_index(dim: &Dimension) -> Result<HashMap<i64, usize>, SchemaError> {
    let k = dim.table.index_of(&dim.key).ok_or_else(|| SchemaError::UnknownAttribute(dim.key.clone()))?;
    let mut m = HashMap::with_capacity(dim.table.rows.len());
    for (i, r) in dim.table.rows.iter().enumerate() {
        if m.insert(r[k], i).is_some() {
            return Err(SchemaError::DuplicateKey { dimension: dim.table.name.clone(), value: r[k] });
        }
    }
    Ok(m)
}

fn spec(name: &str, min: i64, max: i64) -> AttributeSpec {
    let (width, signed) = pow2_width(min, max);
    AttributeSpec { name: name.into(), width, signed }
}

/// Deterministic SSB-lite star: `lineorder` with `6000 × scale` rows and
/// dimensions `part`, `supplier`, `customer`, `date`.
pub fn gen_ssb_lite(scale: usize, seed: u64) -> StarSchema {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = scale.max(1);
    let (n_part, n_supp, n_cust) = (200 * scale, 20 * scale, 300 * scale);

    let mut part = HostTable::new(
        "part",
        vec![
            spec("partkey", 1, n_part as i64),
            spec("mfgr", 1, 5),
            spec("category", 1, 25),
            spec("brand", 1, 1000),
            spec("size", 1, 50),
        ],
    );
    for k in 1..=n_part as i64 {
        let mfgr = rng.gen_range(1..=5);
        let category = (mfgr - 1) * 5 + rng.gen_range(1..=5);
        let brand = (category - 1) * 40 + rng.gen_range(1..=40);
        part.rows.push(vec![k, mfgr, category, brand, rng.gen_range(1..=50)]);
    }

    let geo = |name: &str, key: &str, n: usize, rng: &mut ChaCha8Rng| {
        let mut t = HostTable::new(
            name,
            vec![spec(key, 1, n as i64), spec("region", 0, 4), spec("nation", 0, 24), spec("city", 0, 249)],
        );
        for k in 1..=n as i64 {
            let region = rng.gen_range(0..5);
            let nation = region * 5 + rng.gen_range(0..5);
            let city = nation * 10 + rng.gen_range(0..10);
            t.rows.push(vec![k, region, nation, city]);
        }
        t
    };
    let supplier = geo("supplier", "suppkey", n_supp, &mut rng);
    let customer = geo("customer", "custkey", n_cust, &mut rng);

    let start = NaiveDate::from_ymd_opt(1992, 1, 1).expect("valid date");
    let datekey = |d: NaiveDate| (d.year() * 10000 + d.month() as i32 * 100 + d.day() as i32) as i64;
    let last = start + Duration::days(7 * (DATE_ROWS as i64 - 1));
    let mut date = HostTable::new(
        "date",
        vec![
            spec("datekey", datekey(start), datekey(last)),
            spec("year", 1992, last.year() as i64),
            spec("month", 1, 12),
            spec("quarter", 1, 4),
        ],
    );
    for i in 0..DATE_ROWS as i64 {
        let d = start + Duration::days(7 * i);
        date.rows.push(vec![datekey(d), d.year() as i64, d.month() as i64, (d.month() as i64 - 1) / 3 + 1]);
    }

    let mut fact = HostTable::new(
        "lineorder",
        vec![
            spec("custkey", 1, n_cust as i64),
            spec("partkey", 1, n_part as i64),
            spec("suppkey", 1, n_supp as i64),
            spec("orderdate", datekey(start), datekey(last)),
            spec("quantity", 1, 50),
            spec("price", 1, 60000),
            spec("discount", 0, 10),
            spec("tax", 0, 8),
            spec("revenue", 0, 60000),
            spec("supplycost", 1, 30000),
            spec("profit", 1 - 30000, 60000),
        ],
    );
    for _ in 0..FACT_ROWS_PER_SCALE * scale {
        let price = rng.gen_range(1..=60000i64);
        let discount = rng.gen_range(0..=10i64);
        let revenue = price * (100 - discount) / 100;
        let supplycost = rng.gen_range(1..=30000i64);
        fact.rows.push(vec![
            rng.gen_range(1..=n_cust as i64),
            rng.gen_range(1..=n_part as i64),
            rng.gen_range(1..=n_supp as i64),
            date.rows[rng.gen_range(0..DATE_ROWS)][0],
            rng.gen_range(1..=50),
            price,
            discount,
            rng.gen_range(0..=8),
            revenue,
            supplycost,
            revenue - supplycost,
        ]);
    }

    let fk = |c: &str, d: &str| ForeignKey { column: c.into(), dimension: d.into() };
    StarSchema {
        fact,
        foreign_keys: vec![fk("custkey", "customer"), fk("partkey", "part"), fk("suppkey", "supplier"), fk("orderdate", "date")],
        dimensions: vec![
            Dimension { table: part, key: "partkey".into() },
            Dimension { table: supplier, key: "suppkey".into() },
            Dimension { table: customer, key: "custkey".into() },
            Dimension { table: date, key: "datekey".into() },
        ],
        dictionaries: BTreeMap::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    #[default]
    Int,
    /// Dictionary-encoded on load.
    String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrDescriptor {
    pub name: String,
    #[serde(rename = "type", default)]
    pub kind: ColumnKind,
    /// Derived from the loaded data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDescriptor {
    pub name: String,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub attributes: Vec<AttrDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarDescriptor {
    pub fact: RelationDescriptor,
    pub foreign_keys: Vec<ForeignKey>,
    pub dimensions: Vec<RelationDescriptor>,
}

impl StarDescriptor {
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(text).map_err(|e| SchemaError::Csv { file: "schema.json".into(), message: e.to_string() })
    }
}

fn load_relation(
    dir: &Path,
    desc: &RelationDescriptor,
    dictionaries: &mut BTreeMap<String, Vec<String>>,
) -> Result<HostTable, SchemaError> {
    let file = desc.file.clone();
    let mut rdr = csv::Reader::from_path(dir.join(&file)).map_err(|e| csv_err(&file, e))?;
    let header = rdr.headers().map_err(|e| csv_err(&file, e))?.clone();
    let mut cols = Vec::with_capacity(desc.attributes.len());
    for a in &desc.attributes {
        let i = header
            .iter()
            .position(|h| h == a.name)
            .ok_or_else(|| SchemaError::MissingColumn { file: file.clone(), column: a.name.clone() })?;
        cols.push(i);
    }
    let mut codes: Vec<HashMap<String, i64>> = vec![HashMap::new(); desc.attributes.len()];
    let mut dicts: Vec<Vec<String>> = vec![Vec::new(); desc.attributes.len()];
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(&file, e))?;
        let mut out = Vec::with_capacity(cols.len());
        for (j, (a, &c)) in desc.attributes.iter().zip(&cols).enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let v = match a.kind {
                ColumnKind::Int => cell.trim().parse::<i64>().map_err(|_| SchemaError::Unparsable {
                    file: file.clone(),
                    row,
                    column: a.name.clone(),
                    value: cell.to_string(),
                })?,
                ColumnKind::String => {
                    let next = dicts[j].len() as i64;
                    *codes[j].entry(cell.to_string()).or_insert_with(|| {
                        dicts[j].push(cell.to_string());
                        next
                    })
                }
            };
            out.push(v);
        }
        rows.push(out);
    }
    let mut schema = Vec::with_capacity(desc.attributes.len());
    for (j, a) in desc.attributes.iter().enumerate() {
        let (lo, hi) = rows.iter().fold((0i64, 0i64), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        let (w, s) = pow2_width(lo, hi);
        let spec = AttributeSpec { name: a.name.clone(), width: a.width.unwrap_or(w), signed: a.signed.unwrap_or(s) };
        if let Some(r) = rows.iter().find(|r| !spec.fits(r[j] as i128)) {
            return Err(SchemaError::ValueOverflow { attr: a.name.clone(), value: r[j] });
        }
        if a.kind == ColumnKind::String {
            dictionaries.insert(format!("{}.{}", desc.name, a.name), std::mem::take(&mut dicts[j]));
        }
        schema.push(spec);
    }
    Ok(HostTable { name: desc.name.clone(), schema, rows })
}

/// Loads one CSV file per relation from `dir` as described by `desc`.
pub fn load_csv(dir: &Path, desc: &StarDescriptor) -> Result<StarSchema, SchemaError> {
    let mut dictionaries = BTreeMap::new();
    let fact = load_relation(dir, &desc.fact, &mut dictionaries)?;
    let mut dimensions = Vec::new();
    for d in &desc.dimensions {
        let table = load_relation(dir, d, &mut dictionaries)?;
        let key = d.key.clone().ok_or_else(|| SchemaError::UnknownAttribute(format!("{}.<key>", d.name)))?;
        dimensions.push(Dimension { table, key });
    }
    let star = StarSchema { fact, foreign_keys: desc.foreign_keys.clone(), dimensions, dictionaries };
    star.check_integrity()?;
    Ok(star)
}

/// Name of a dimension attribute inside the wide relation.
pub fn wide_name(dim: &str, attr: &str) -> String {
    format!("{dim}.{attr}")
}

/// Attributes of the wide relation that come from dimensions.
pub fn dimension_attrs(star: &StarSchema) -> Vec<String> {
    star.dimensions
        .iter()
        .flat_map(|d| {
            d.table.schema.iter().filter(|a| a.name != d.key).map(|a| wide_name(&d.table.name, &a.name))
        })
        .collect()
}

/// Equi-joins the fact relation with every referenced dimension. Row order
/// follows the fact relation.
pub fn prejoin(star: &StarSchema) -> Result<HostTable, SchemaError> {
    star.check_integrity()?;
    let mut schema = star.fact.schema.clone();
    let mut joins = Vec::new();
    for fk in &star.foreign_keys {
        let dim = star.dimension(&fk.dimension)?;
        let keys = key_index(dim)?;
        let col = star.fact.index_of(&fk.column).ok_or_else(|| SchemaError::UnknownAttribute(fk.column.clone()))?;
        let carried: Vec<usize> =
            dim.table.schema.iter().enumerate().filter(|(_, a)| a.name != dim.key).map(|(i, _)| i).collect();
        for &i in &carried {
            let a = &dim.table.schema[i];
            schema.push(AttributeSpec { name: wide_name(&dim.table.name, &a.name), ..a.clone() });
        }
        joins.push((col, keys, dim, carried));
    }
    let rows = star
        .fact
        .rows
        .iter()
        .map(|r| {
            let mut out = r.clone();
            for (col, keys, dim, carried) in &joins {
                let d = &dim.table.rows[keys[&r[*col]]];
                out.extend(carried.iter().map(|&i| d[i]));
            }
            out
        })
        .collect();
    Ok(HostTable { name: star.fact.name.clone(), schema, rows })
}

/// Updates `attr` of every dimension record of `dim` matching `key_pred`.
/// This is the host-side reference for [`apply_dimension_update`].
pub fn update_star(
    star: &mut StarSchema,
    dim: &str,
    attr: &str,
    key_pred: &PredicateExpr,
    value: i64,
) -> Result<usize, SchemaError> {
    let d = star
        .dimensions
        .iter_mut()
        .find(|d| d.table.name == dim)
        .ok_or_else(|| SchemaError::UnknownDimension(dim.into()))?;
    let idx: HashMap<String, usize> = d.table.schema.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();
    let target = *idx.get(attr).ok_or_else(|| SchemaError::UnknownAttribute(attr.into()))?;
    let mut names = std::collections::BTreeSet::new();
    key_pred.attrs(&mut names);
    for n in &names {
        if !idx.contains_key(n) {
            return Err(SchemaError::UnknownAttribute(n.clone()));
        }
    }
    let mut changed = 0;
    for r in &mut d.table.rows {
        if eval_predicate(key_pred, &|n| r[idx[n]]) {
            r[target] = value;
            changed += 1;
        }
    }
    Ok(changed)
}

/// Rewrites a predicate over attributes of dimension `dim` into the names
/// of the wide relation: the key becomes the referencing foreign key, other
/// attributes become `<dim>.<attr>`.
pub fn to_wide_predicate(star: &StarSchema, dim: &str, pred: &PredicateExpr) -> Result<PredicateExpr, SchemaError> {
    let d = star.dimension(dim)?;
    let fk = star
        .foreign_keys
        .iter()
        .find(|f| f.dimension == dim)
        .ok_or_else(|| SchemaError::UnknownDimension(dim.into()))?;
    let rename = |n: &str| -> Result<String, SchemaError> {
        if n == d.key {
            Ok(fk.column.clone())
        } else if d.table.index_of(n).is_some() {
            Ok(wide_name(dim, n))
        } else {
            Err(SchemaError::UnknownAttribute(n.into()))
        }
    };
    Ok(match pred {
        PredicateExpr::Cmp { attr, op, rhs } => PredicateExpr::Cmp {
            attr: rename(attr)?,
            op: *op,
            rhs: match rhs {
                Operand::Attr(b) => Operand::Attr(rename(b)?),
                Operand::Imm(v) => Operand::Imm(*v),
            },
        },
        PredicateExpr::And(a, b) => to_wide_predicate(star, dim, a)?.and(to_wide_predicate(star, dim, b)?),
        PredicateExpr::Or(a, b) => to_wide_predicate(star, dim, a)?.or(to_wide_predicate(star, dim, b)?),
        PredicateExpr::Not(a) => to_wide_predicate(star, dim, a)?.not(),
    })
}

/// In-memory update of the pre-joined relation: filter on `key_pred`
/// (over attributes of `dim`), then MUX `value` into `<dim>.<attr>` of
/// every matching row. No attribute value is read by the host.
pub fn apply_dimension_update(
    memory: &mut PimMemory,
    star: &StarSchema,
    dim: &str,
    attr: &str,
    key_pred: &PredicateExpr,
    value: i64,
) -> Result<(), SchemaError> {
    let pred = to_wide_predicate(star, dim, key_pred)?;
    let program = isa::compile_predicate(memory, Some(&pred))?;
    let mask = program.result;
    let res = isa::exec_program(memory, &program, &isa::Pages::All)
        .and_then(|_| isa::mux_update(memory, &wide_name(dim, attr), mask, value));
    isa::release(memory, mask)?;
    Ok(res?)
}
