//! Click record ingestion and hashed sparse featurization.
//!
//! Every categorical field becomes one hashed index (`name=value`) and, with
//! crosses enabled, every unordered pair of fields becomes another
//! (`nameA=valueA&nameB=valueB`, in field order). Single features and crosses
//! share one hash space of `2^hash_bits` buckets; colliding terms are summed.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::Xxh64;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Seed for the feature hash. Changing it changes every index.
pub const DEFAULT_HASH_SEED: u64 = 0x6d68_6f6c_5f66_6561;

pub const MAX_HASH_BITS: u32 = 30;

/// One click as read from a log, before featurization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub click_id: String,
    pub click_ts: u64,
    pub fields: Vec<(String, String)>,
    pub conversion_delay: Option<u64>,
    pub conversion_value: Option<f64>,
}

impl RawRecord {
    pub fn converted(&self) -> bool {
        self.conversion_delay.is_some()
    }

    /// Checks the delay/value pairing and that any delay lies in `(0, window]`.
    pub fn validate(&self, window: u64) -> Result<()> {
        match (self.conversion_delay, self.conversion_value) {
            (None, None) => Ok(()),
            (Some(d), Some(v)) => {
                if d == 0 || d > window {
                    Err(Error::input(format!(
                        "click {}: delay {d}s outside (0, {window}]",
                        self.click_id
                    )))
                } else if !(v.is_finite() && v >= 0.0) {
                    Err(Error::input(format!("click {}: bad value {v}", self.click_id)))
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::input(format!(
                "click {}: conversion delay and value must both be present or both absent",
                self.click_id
            ))),
        }
    }
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseVector<F> {
    indices: Vec<u32>,
    values: Vec<F>,
}

impl<F: Scalar> SparseVector<F> {
    /// Builds a vector from unordered `(index, value)` terms, summing duplicates.
    pub fn from_terms(mut terms: Vec<(u32, F)>) -> Result<Self> {
        if let Some((i, v)) = terms.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::input(format!("non-finite value {v} at index {i}")));
        }
        terms.sort_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(terms.len());
        let mut values: Vec<F> = Vec::with_capacity(terms.len());
        for (i, v) in terms {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(SparseVector { indices, values })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot(&self, weights: &[F]) -> F {
        self.iter().fold(F::zero(), |acc, (i, v)| acc + weights[i] * v)
    }
}

/// Featurization settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub hash_bits: u32,
    pub crosses: bool,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            hash_bits: 24,
            crosses: true,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_HASH_BITS).contains(&self.hash_bits) {
            return Err(Error::config(format!(
                "hash_bits must be in [1, {MAX_HASH_BITS}], got {}",
                self.hash_bits
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1usize << self.hash_bits
    }

    fn bucket(&self, hasher: Xxh64) -> u32 {
        (hasher.digest() & ((1u64 << self.hash_bits) - 1)) as u32
    }

    fn hash_single(&self, name: &str, value: &str) -> u32 {
        let mut h = Xxh64::new(self.seed);
        h.update(name.as_bytes());
        h.update(b"=");
        h.update(value.as_bytes());
        self.bucket(h)
    }

    fn hash_cross(&self, a: &(String, String), b: &(String, String)) -> u32 {
        let mut h = Xxh64::new(self.seed);
        h.update(a.0.as_bytes());
        h.update(b"=");
        h.update(a.1.as_bytes());
        h.update(b"&");
        h.update(b.0.as_bytes());
        h.update(b"=");
        h.update(b.1.as_bytes());
        self.bucket(h)
    }
}

fn is_non_finite_literal(s: &str) -> bool {
    let s = s.trim_start_matches(['+', '-']);
    s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity")
}

/// Hashes a record's fields (and their pairwise crosses) into a sparse vector.
pub fn featurize<F: Scalar>(fields: &[(String, String)], cfg: &FeatureConfig) -> Result<SparseVector<F>> {
    cfg.validate()?;
    if fields.is_empty() {
        return Err(Error::input("cannot featurize a record with no fields"));
    }
    if let Some((name, value)) = fields.iter().find(|(_, v)| is_non_finite_literal(v)) {
        return Err(Error::input(format!("field {name} has non-finite encoding {value:?}")));
    }
    let k = fields.len();
    let mut terms = Vec::with_capacity(if cfg.crosses { k + k * (k - 1) / 2 } else { k });
    for (name, value) in fields {
        terms.push((cfg.hash_single(name, value), F::one()));
    }
    if cfg.crosses {
        for (i, a) in fields.iter().enumerate() {
            for b in &fields[i + 1..] {
                terms.push((cfg.hash_cross(a, b), F::one()));
            }
        }
    }
    SparseVector::from_terms(terms)
}

/// What a TSV column holds.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnRole {
    ClickId,
    ClickTs,
    Delay,
    Value,
    Categorical(String),
    /// Numeric column bucketized by ascending edges into a categorical field.
    Numeric { name: String, edges: Vec<f64> },
    Ignore,
}

impl ColumnRole {
    fn field_name(&self) -> Option<&str> {
        match self {
            ColumnRole::Categorical(n) | ColumnRole::Numeric { name: n, .. } => Some(n),
            _ => None,
        }
    }
}

impl FromStr for ColumnRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "click_id" => ColumnRole::ClickId,
            "click_ts" => ColumnRole::ClickTs,
            "delay" => ColumnRole::Delay,
            "value" => ColumnRole::Value,
            "ignore" => ColumnRole::Ignore,
            _ => {
                if let Some(name) = s.strip_prefix("cat:") {
                    ColumnRole::Categorical(name.to_string())
                } else if let Some(rest) = s.strip_prefix("num:") {
                    let (name, edges) = rest
                        .split_once(':')
                        .ok_or_else(|| Error::config(format!("numeric role needs edges: {s}")))?;
                    let edges = edges
                        .split(',')
                        .map(|e| e.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::config(format!("bad bucket edge in {s}: {e}")))?;
                    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::config(format!("bucket edges must be finite and increasing: {s}")));
                    }
                    ColumnRole::Numeric { name: name.to_string(), edges }
                } else {
                    return Err(Error::config(format!("unknown column role {s:?}")));
                }
            }
        })
    }
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRole::ClickId => f.write_str("click_id"),
            ColumnRole::ClickTs => f.write_str("click_ts"),
            ColumnRole::Delay => f.write_str("delay"),
            ColumnRole::Value => f.write_str("value"),
            ColumnRole::Ignore => f.write_str("ignore"),
            ColumnRole::Categorical(n) => write!(f, "cat:{n}"),
            ColumnRole::Numeric { name, edges } => {
                let edges: Vec<String> = edges.iter().map(|e| e.to_string()).collect();
                write!(f, "num:{name}:{}", edges.join(","))
            }
        }
    }
}

/// Column layout of a TSV click log.
///
/// The text form is one `key=value` pair per line; `#` starts a comment.
/// Integer keys map a column index to a role, `columns=N` pins the column
/// count and `header=true` skips the first line.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub columns: Vec<ColumnRole>,
    pub header: bool,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut roles = BTreeMap::new();
        let mut columns = None;
        let mut header = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("schema line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "columns" => {
                    columns = Some(value.parse::<usize>().map_err(|e| Error::config(format!("columns: {e}")))?)
                }
                "header" => {
                    header = value.parse::<bool>().map_err(|e| Error::config(format!("header: {e}")))?
                }
                _ => {
                    let idx = key
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("schema line {}: unknown key {key:?}", n + 1)))?;
                    if roles.insert(idx, value.parse::<ColumnRole>()?).is_some() {
                        return Err(Error::config(format!("column {idx} assigned twice")));
                    }
                }
            }
        }
        let width = columns.unwrap_or_else(|| roles.keys().next_back().map_or(0, |&k| k + 1));
        let mut cols = vec![ColumnRole::Ignore; width];
        for (idx, role) in roles {
            if idx >= width {
                return Err(Error::config(format!("column {idx} beyond declared width {width}")));
            }
            cols[idx] = role;
        }
        let schema = Schema { columns: cols, header };
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<()> {
        let count = |want: &ColumnRole| self.columns.iter().filter(|c| *c == want).count();
        for role in [ColumnRole::ClickTs, ColumnRole::Delay, ColumnRole::Value] {
            if count(&role) != 1 {
                return Err(Error::config(format!("schema needs exactly one {role} column")));
            }
        }
        if count(&ColumnRole::ClickId) > 1 {
            return Err(Error::config("schema has more than one click_id column"));
        }
        if !self.columns.iter().any(|c| c.field_name().is_some()) {
            return Err(Error::config("schema has no feature columns"));
        }
        Ok(())
    }

    /// Layout written by the synthetic generator: id, ts, delay, value, then
    /// one categorical column per field.
    pub fn generated(field_names: &[String]) -> Self {
        let mut columns = vec![
            ColumnRole::ClickId,
            ColumnRole::ClickTs,
            ColumnRole::Delay,
            ColumnRole::Value,
        ];
        columns.extend(field_names.iter().cloned().map(ColumnRole::Categorical));
        Schema { columns, header: true }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("columns={}\nheader={}\n", self.columns.len(), self.header);
        for (i, c) in self.columns.iter().enumerate() {
            out.push_str(&format!("{i}={c}\n"));
        }
        out
    }
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s == "-1"
}

/// Parses one TSV line. `line_no` is 1-based and only used in errors; it
/// also serves as the click id when the schema has no id column.
pub fn parse_tsv_record(line: &str, line_no: usize, schema: &Schema) -> Result<RawRecord> {
    let perr = |msg: String| Error::Parse { line: line_no, msg };
    let cells: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if cells.len() != schema.columns.len() {
        return Err(perr(format!(
            "expected {} columns, found {}",
            schema.columns.len(),
            cells.len()
        )));
    }
    let mut click_id = None;
    let mut click_ts = None;
    let mut delay = None;
    let mut value = None;
    let mut fields = Vec::new();
    for (cell, role) in cells.iter().map(|c| c.trim()).zip(&schema.columns) {
        match role {
            ColumnRole::ClickId => click_id = Some(cell.to_string()),
            ColumnRole::ClickTs => {
                click_ts = Some(
                    cell.parse::<u64>()
                        .map_err(|_| perr(format!("bad click timestamp {cell:?}")))?,
                )
            }
            ColumnRole::Delay => {
                if !is_missing(cell) {
                    let d = cell
                        .parse::<f64>()
                        .ok()
                        .filter(|d| d.is_finite() && *d >= 0.0)
                        .ok_or_else(|| perr(format!("bad delay {cell:?}")))?;
                    // Zero delays are moved to one second so they fall in (0, r].
                    delay = Some((d.ceil() as u64).max(1));
                }
            }
            ColumnRole::Value => {
                if !is_missing(cell) {
                    let v = cell
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite() && *v >= 0.0)
                        .ok_or_else(|| perr(format!("bad conversion value {cell:?}")))?;
                    value = Some(v);
                }
            }
            ColumnRole::Categorical(name) => fields.push((name.clone(), cell.to_string())),
            ColumnRole::Numeric { name, edges } => {
                let bucket = if is_missing(cell) {
                    "missing".to_string()
                } else {
                    let x = cell
                        .parse::<f64>()
                        .map_err(|_| perr(format!("bad numeric field {name}={cell:?}")))?;
                    if !x.is_finite() {
                        return Err(perr(format!("non-finite numeric field {name}={cell:?}")));
                    }
                    format!("b{}", edges.partition_point(|&e| e <= x))
                };
                fields.push((name.clone(), bucket));
            }
            ColumnRole::Ignore => {}
        }
    }
    if delay.is_some() != value.is_some() {
        return Err(perr("conversion delay and value must both be present or both absent".into()));
    }
    Ok(RawRecord {
        click_id: click_id.unwrap_or_else(|| line_no.to_string()),
        click_ts: click_ts.expect("schema has a click_ts column"),
        fields,
        conversion_delay: delay,
        conversion_value: value,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorPolicy {
    Skip,
    Abort,
}

#[derive(Debug, Default)]
pub struct TsvBatch {
    pub records: Vec<RawRecord>,
    /// Record-level errors collected under [`ErrorPolicy::Skip`].
    pub errors: Vec<Error>,
}

/// Reads a whole TSV log.
///
/// Conversions later than `window` seconds are outside the attribution
/// window and are dropped, leaving a non-converting click.
pub fn read_tsv<R: BufRead>(reader: R, schema: &Schema, window: u64, policy: ErrorPolicy) -> Result<TsvBatch> {
    let mut batch = TsvBatch::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if (i == 0 && schema.header) || line.trim().is_empty() {
            continue;
        }
        match parse_tsv_record(&line, line_no, schema) {
            Ok(mut rec) => {
                if rec.conversion_delay.is_some_and(|d| d > window) {
                    rec.conversion_delay = None;
                    rec.conversion_value = None;
                }
                batch.records.push(rec);
            }
            Err(e) if policy == ErrorPolicy::Skip => batch.errors.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok(batch)
}

/// Writes records in the [`Schema::generated`] layout.
pub fn write_tsv<W: Write>(mut out: W, records: &[RawRecord]) -> Result<()> {
    let names: Vec<&str> = records
        .first()
        .map(|r| r.fields.iter().map(|(n, _)| n.as_str()).collect())
        .unwrap_or_default();
    writeln!(out, "click_id\tclick_ts\tdelay\tvalue\t{}", names.join("\t"))?;
    for r in records {
        write!(out, "{}\t{}\t", r.click_id, r.click_ts)?;
        match (r.conversion_delay, r.conversion_value) {
            (Some(d), Some(v)) => write!(out, "{d}\t{v}")?,
            _ => write!(out, "\t")?,
        }
        for (_, v) in &r.fields {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn cfg(bits: u32) -> FeatureConfig {
        FeatureConfig { hash_bits: bits, ..Default::default() }
    }

    #[test]
    fn two_fields_with_crosses_at_24_bits() {
        let x: SparseVector<f64> = featurize(&fields(&[("a", "x"), ("b", "y")]), &cfg(24)).unwrap();
        assert_eq!(x.len(), 3);
        assert!(x.values().iter().all(|&v| v == 1.0));
        assert!(x.indices().iter().all(|&i| i < (1 << 24)));
    }

    #[test]
    fn singleton_has_no_cross() {
        let x: SparseVector<f64> = featurize(&fields(&[("a", "x")]), &cfg(24)).unwrap();
        assert_eq!(x.len(), 1);
    }

    #[test]
    fn collision_sums_values() {
        // Brute-force a value of field b that lands in a's bucket.
        let c = FeatureConfig { hash_bits: 8, crosses: false, ..Default::default() };
        let target = c.hash_single("a", "x");
        let v = (0..100_000)
            .map(|i| format!("v{i}"))
            .find(|v| c.hash_single("b", v) == target)
            .expect("8-bit collision exists");
        let x: SparseVector<f64> = featurize(&fields(&[("a", "x"), ("b", &v)]), &c).unwrap();
        assert_eq!(x.indices(), &[target]);
        assert_eq!(x.values(), &[2.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = fields(&[("a", "x")]);
        assert!(featurize::<f64>(&f, &cfg(0)).is_err());
        assert!(featurize::<f64>(&f, &cfg(31)).is_err());
        assert!(featurize::<f64>(&[], &cfg(16)).is_err());
        assert!(featurize::<f64>(&fields(&[("p", "NaN")]), &cfg(16)).is_err());
        assert!(featurize::<f64>(&fields(&[("p", "-inf")]), &cfg(16)).is_err());
    }

    #[test]
    fn hash_is_pinned() {
        // Guards against accidental changes to the hashing scheme.
        let c = cfg(24);
        let a = c.hash_single("a", "x");
        assert_eq!(a, c.hash_single("a", "x"));
        let mut h = Xxh64::new(DEFAULT_HASH_SEED);
        h.update(b"a=x");
        assert_eq!(a as u64, h.digest() & 0xff_ffff);
        let mut h = Xxh64::new(DEFAULT_HASH_SEED);
        h.update(b"a=x&b=y");
        let ab = (fields(&[("a", "x")])[0].clone(), fields(&[("b", "y")])[0].clone());
        assert_eq!(c.hash_cross(&ab.0, &ab.1) as u64, h.digest() & 0xff_ffff);
    }

    fn schema() -> Schema {
        Schema::parse(
            "# test layout\ncolumns=6\n0=click_id\n1=click_ts\n2=delay\n3=value\n4=cat:brand\n5=num:price:10,50,100\n",
        )
        .unwrap()
    }

    #[test]
    fn parses_non_converting_line() {
        let r = parse_tsv_record("c1\t100\t\t\tacme\t42", 1, &schema()).unwrap();
        assert_eq!(r.conversion_delay, None);
        assert_eq!(r.conversion_value, None);
        assert_eq!(r.fields, fields(&[("brand", "acme"), ("price", "b1")]));
    }

    #[test]
    fn parses_converting_line() {
        let r = parse_tsv_record("c1\t100\t86400\t35.5\tacme\t500", 1, &schema()).unwrap();
        assert_eq!(r.conversion_delay, Some(86_400));
        assert_eq!(r.conversion_value, Some(35.5));
        assert_eq!(r.fields[1].1, "b3");
    }

    #[test]
    fn zero_delay_becomes_one_second() {
        let r = parse_tsv_record("c1\t100\t0\t1\tacme\t5", 1, &schema()).unwrap();
        assert_eq!(r.conversion_delay, Some(1));
    }

    #[test]
    fn criteo_missing_markers() {
        let r = parse_tsv_record("c1\t100\t-1\t-1\tacme\t", 1, &schema()).unwrap();
        assert!(!r.converted());
        assert_eq!(r.fields[1].1, "missing");
    }

    #[test]
    fn skip_policy_counts_errors() {
        let s = Schema { header: false, ..schema() };
        let lines = [
            "c0\t0\t\t\ta\t1",
            "c1\t5\t10\t2.0\tb\t20",
            "c2\tnot-a-ts\t\t\ta\t1",
            "c3\t9\t\t\tc\t1",
            "c4\t9\t\t\tc",
            "c5\t10\t\t\ta\t200",
            "c6\t11\t\t\ta\t200",
            "c7\t12\t7\t1.0\ta\t200",
            "c8\t13\t\t\ta\t200",
            "c9\t14\t\t\ta\t200",
        ];
        let text = lines.join("\n");
        let batch = read_tsv(text.as_bytes(), &s, 30 * 86_400, ErrorPolicy::Skip).unwrap();
        assert_eq!(batch.records.len(), 8);
        assert_eq!(batch.errors.len(), 2);
        assert!(matches!(batch.errors[0], Error::Parse { line: 3, .. }));
        assert!(matches!(batch.errors[1], Error::Parse { line: 5, .. }));
        assert!(matches!(
            read_tsv(text.as_bytes(), &s, 30 * 86_400, ErrorPolicy::Abort),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn schema_rejects_missing_roles() {
        assert!(Schema::parse("0=click_ts\n1=cat:a\n").is_err());
        assert!(Schema::parse("0=click_ts\n1=delay\n2=value\n").is_err());
        assert!(Schema::parse("0=click_ts\n1=delay\n2=value\n3=bogus\n").is_err());
        assert!(Schema::parse("0=click_ts\n1=delay\n2=value\n3=num:p:5,1\n").is_err());
    }

    #[test]
    fn schema_text_round_trips() {
        let s = schema();
        assert_eq!(Schema::parse(&s.to_text()).unwrap().columns, s.columns);
    }

    #[test]
    fn late_conversions_are_dropped_on_read() {
        let s = Schema { header: false, ..schema() };
        let batch = read_tsv("c0\t0\t999999999\t3\ta\t1".as_bytes(), &s, 86_400, ErrorPolicy::Abort).unwrap();
        assert!(!batch.records[0].converted());
    }
}
