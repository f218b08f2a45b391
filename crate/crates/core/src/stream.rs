//! Replay of a click stream with one lagged cursor per head.
//!
//! The click log is append-ordered by click time and conversions are kept
//! in a store keyed by click id. Head `i` consumes a click only once
//! `click_ts + t_i` has passed, at which point its window label is final.
//! The store is loaded up front; a conversion is only ever read by a head
//! whose wait has elapsed, so the training sequence matches live arrival.
//!
//! [`advance_batch`] is the daily variant: windows are whole days and each
//! day's batch joins click partitions against the conversion partitions
//! that have landed so far, including the one overflow day.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{featurize, read_tsv, write_tsv, ErrorPolicy, FeatureConfig, RawRecord, Schema, SparseVector};
use crate::glm::{GlmKind, TrainConfig};
use crate::multihead::MultiHeadModel;
use crate::quantizer::{quantize, DelayWindows, QuantizedLabels, DAY};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Click<F> {
    pub click_id: String,
    pub click_ts: u64,
    pub x: SparseVector<F>,
}

/// Clicks in non-decreasing time order with unique ids.
#[derive(Clone, Debug, Default)]
pub struct ClickLog<F> {
    clicks: Vec<Click<F>>,
    ids: HashSet<String>,
}

impl<F: Scalar> ClickLog<F> {
    pub fn new() -> Self {
        ClickLog {
            clicks: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn push(&mut self, click: Click<F>) -> Result<()> {
        if let Some(last) = self.clicks.last() {
            if click.click_ts < last.click_ts {
                return Err(Error::input(format!(
                    "click {} at {} is older than the log tail {}",
                    click.click_id, click.click_ts, last.click_ts
                )));
            }
        }
        if !self.ids.insert(click.click_id.clone()) {
            return Err(Error::input(format!("duplicate click id {}", click.click_id)));
        }
        self.clicks.push(click);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn get(&self, i: usize) -> &Click<F> {
        &self.clicks[i]
    }

    pub fn clicks(&self) -> &[Click<F>] {
        &self.clicks
    }

    pub fn first_ts(&self) -> Option<u64> {
        self.clicks.first().map(|c| c.click_ts)
    }

    pub fn last_ts(&self) -> Option<u64> {
        self.clicks.last().map(|c| c.click_ts)
    }
}

/// Conversions keyed by click id; the first conversion per click wins.
#[derive(Clone, Debug, Default)]
pub struct ConversionStore<F> {
    map: HashMap<String, (u64, F)>,
}

impl<F: Scalar> ConversionStore<F> {
    pub fn new() -> Self {
        ConversionStore { map: HashMap::new() }
    }

    /// Records a conversion. Returns false if the click already had one.
    pub fn insert(&mut self, click_id: &str, delay: u64, value: F) -> Result<bool> {
        if delay == 0 {
            return Err(Error::input(format!("click {click_id}: zero conversion delay")));
        }
        if !(value.is_finite() && value >= F::zero()) {
            return Err(Error::input(format!("click {click_id}: conversion value must be finite and non-negative")));
        }
        if self.map.contains_key(click_id) {
            return Ok(false);
        }
        self.map.insert(click_id.to_string(), (delay, value));
        Ok(true)
    }

    pub fn get(&self, click_id: &str) -> Option<(u64, F)> {
        self.map.get(click_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Quantized labels for a click from its stored conversion.
    pub fn labels(&self, click_id: &str, windows: &DelayWindows) -> Result<QuantizedLabels<F>> {
        match self.get(click_id) {
            Some((d, v)) => quantize(Some(d), Some(v), windows),
            None => quantize(None, None, windows),
        }
    }
}

/// Featurizes records into a log and a conversion store.
///
/// Records must already be in click-time order.
pub fn load_records<F: Scalar>(records: &[RawRecord], cfg: &FeatureConfig) -> Result<(ClickLog<F>, ConversionStore<F>)> {
    let mut log = ClickLog::new();
    let mut store = ConversionStore::new();
    for r in records {
        log.push(Click {
            click_id: r.click_id.clone(),
            click_ts: r.click_ts,
            x: featurize(&r.fields, cfg)?,
        })?;
        if let (Some(d), Some(v)) = (r.conversion_delay, r.conversion_value) {
            store.insert(&r.click_id, d, F::cast(v))?;
        }
    }
    Ok((log, store))
}

/// One training event emitted by the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord<F> {
    pub head: usize,
    pub click_id: String,
    pub click_ts: u64,
    pub label: F,
    /// Simulated time at which the update happened.
    pub at: u64,
}

/// Below this many pending updates, heads advance on the calling thread.
const PARALLEL_MIN_EVENTS: usize = 4096;

/// Per-head cursors over the click log.
#[derive(Clone, Debug)]
pub struct StreamState<F> {
    cursors: Vec<usize>,
    clock: u64,
    consumed: Vec<u64>,
    workers: usize,
    trace: Option<Vec<Vec<TrainRecord<F>>>>,
}

struct HeadJob<'a, F> {
    head: usize,
    wait: u64,
    model: &'a mut crate::glm::GlmModel<F>,
    cursor: &'a mut usize,
    consumed: &'a mut u64,
    trace: Option<&'a mut Vec<TrainRecord<F>>>,
}

impl<F: Scalar> StreamState<F> {
    pub fn new(n_heads: usize) -> Self {
        StreamState {
            cursors: vec![0; n_heads],
            clock: 0,
            consumed: vec![0; n_heads],
            workers: 1,
            trace: None,
        }
    }

    /// Starts the simulated clock at `clock` instead of zero.
    pub fn starting_at(mut self, clock: u64) -> Self {
        self.clock = clock;
        self
    }

    /// Advances heads on up to `workers` threads. Results do not depend on it.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    /// Records every training event.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(vec![Vec::new(); self.cursors.len()]);
        self
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn cursors(&self) -> &[usize] {
        &self.cursors
    }

    /// Clicks consumed so far by each head.
    pub fn consumed(&self) -> &[u64] {
        &self.consumed
    }

    pub fn trace(&self) -> Option<&[Vec<TrainRecord<F>>]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<Vec<TrainRecord<F>>>> {
        let n = self.cursors.len();
        self.trace.as_mut().map(|t| std::mem::replace(t, vec![Vec::new(); n]))
    }

    /// Moves the clock to `new_clock`, training every head on the clicks
    /// whose wait has elapsed since the previous call.
    pub fn advance(
        &mut self,
        log: &ClickLog<F>,
        store: &ConversionStore<F>,
        mh: &mut MultiHeadModel<F>,
        cfg: &TrainConfig<F>,
        new_clock: u64,
    ) -> Result<()> {
        if new_clock < self.clock {
            return Err(Error::ClockRegression { from: self.clock, to: new_clock });
        }
        if mh.n_heads() != self.cursors.len() {
            return Err(Error::config("stream state and model disagree on head count"));
        }
        let windows = mh.windows().clone();
        let mut traces: Vec<Option<&mut Vec<TrainRecord<F>>>> = match self.trace.as_mut() {
            Some(t) => t.iter_mut().map(Some).collect(),
            None => (0..self.cursors.len()).map(|_| None).collect(),
        };
        let mut jobs: Vec<HeadJob<'_, F>> = mh
            .heads_mut()
            .iter_mut()
            .zip(self.cursors.iter_mut())
            .zip(self.consumed.iter_mut())
            .zip(traces.iter_mut())
            .enumerate()
            .map(|(head, (((model, cursor), consumed), trace))| HeadJob {
                head,
                wait: windows.wait(head),
                model,
                cursor,
                consumed,
                trace: trace.take(),
            })
            .collect();

        let pending: usize = jobs
            .iter()
            .map(|j| {
                log.clicks()[*j.cursor..].partition_point(|c| c.click_ts.saturating_add(j.wait) <= new_clock)
            })
            .sum();
        let run = |job: &mut HeadJob<'_, F>| run_head(job, log, store, &windows, cfg, new_clock);
        if self.workers <= 1 || jobs.len() <= 1 || pending < PARALLEL_MIN_EVENTS {
            jobs.iter_mut().try_for_each(run)?;
        } else {
            let per = jobs.len().div_ceil(self.workers);
            std::thread::scope(|s| {
                let handles: Vec<_> = jobs
                    .chunks_mut(per)
                    .map(|chunk| s.spawn(move || chunk.iter_mut().try_for_each(run)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("head worker panicked"))
                    .collect::<Result<Vec<_>>>()
            })?;
        }
        self.clock = new_clock;
        Ok(())
    }
}

fn run_head<F: Scalar>(
    job: &mut HeadJob<'_, F>,
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
    windows: &DelayWindows,
    cfg: &TrainConfig<F>,
    clock: u64,
) -> Result<()> {
    let kind = job.model.kind();
    while *job.cursor < log.len() {
        let click = log.get(*job.cursor);
        if click.click_ts.saturating_add(job.wait) > clock {
            break;
        }
        let label = match store.get(&click.click_id) {
            None => F::zero(),
            Some((delay, value)) => match windows.head_of(delay) {
                None => return Err(Error::input(format!("click {}: delay {delay}s outside the window", click.click_id))),
                Some(h) if h != job.head => F::zero(),
                Some(_) => match kind {
                    GlmKind::Logistic => F::one(),
                    GlmKind::Linear => value,
                },
            },
        };
        train_checked(job.model, job.head, job.wait, click, label, clock, cfg)?;
        if let Some(t) = job.trace.as_deref_mut() {
            t.push(TrainRecord {
                head: job.head,
                click_id: click.click_id.clone(),
                click_ts: click.click_ts,
                label,
                at: clock,
            });
        }
        *job.cursor += 1;
        *job.consumed += 1;
    }
    Ok(())
}

/// Trains one head after asserting the click's wait has elapsed.
fn train_checked<F: Scalar>(
    model: &mut crate::glm::GlmModel<F>,
    head: usize,
    wait: u64,
    click: &Click<F>,
    label: F,
    now: u64,
    cfg: &TrainConfig<F>,
) -> Result<()> {
    if click.click_ts.saturating_add(wait) > now {
        return Err(Error::Leakage { head, click_id: click.click_id.clone() });
    }
    model.sgd_step(&click.x, label, cfg)
}

/// A conversion as it lands in a daily partition.
#[derive(Clone, Debug, PartialEq)]
pub struct ConversionEvent<F> {
    pub click_id: String,
    pub conversion_ts: u64,
    pub value: F,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partition<F> {
    pub clicks: Vec<Click<F>>,
    pub conversions: Vec<ConversionEvent<F>>,
}

/// Day-indexed click and conversion partitions.
///
/// Days before `first_day` hold no data and read as empty. Days from
/// `first_day` on must be present when required.
#[derive(Clone, Debug)]
pub struct DailyPartitions<F> {
    first_day: i64,
    parts: BTreeMap<i64, Partition<F>>,
}

pub fn day_of(ts: u64) -> i64 {
    (ts / DAY) as i64
}

impl<F: Scalar> DailyPartitions<F> {
    pub fn new(first_day: i64) -> Self {
        DailyPartitions {
            first_day,
            parts: BTreeMap::new(),
        }
    }

    /// Splits a log and store into day partitions. Conversions land in the
    /// partition of the day they happen, which may lie past the last click day.
    pub fn from_log(log: &ClickLog<F>, store: &ConversionStore<F>) -> Self {
        let first_day = log.first_ts().map_or(0, day_of);
        let mut out = DailyPartitions::new(first_day);
        for c in log.clicks() {
            out.parts.entry(day_of(c.click_ts)).or_default().clicks.push(c.clone());
            if let Some((d, v)) = store.get(&c.click_id) {
                let conversion_ts = c.click_ts + d;
                out.parts
                    .entry(day_of(conversion_ts))
                    .or_default()
                    .conversions
                    .push(ConversionEvent {
                        click_id: c.click_id.clone(),
                        conversion_ts,
                        value: v,
                    });
            }
        }
        if let Some(last) = log.last_ts().map(day_of) {
            for d in first_day..=last {
                out.parts.entry(d).or_default();
            }
        }
        out
    }

    pub fn first_day(&self) -> i64 {
        self.first_day
    }

    pub fn insert(&mut self, day: i64, part: Partition<F>) {
        self.parts.insert(day, part);
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        self.parts.keys().copied()
    }

    pub fn last_day(&self) -> Option<i64> {
        self.parts.keys().next_back().copied()
    }

    pub fn get(&self, day: i64) -> Option<&Partition<F>> {
        self.parts.get(&day)
    }

    fn required(&self, day: i64, missing: &mut Vec<i64>) -> Option<&Partition<F>> {
        if day < self.first_day {
            return None;
        }
        let p = self.parts.get(&day);
        if p.is_none() && !missing.contains(&day) {
            missing.push(day);
        }
        p
    }
}

/// Days of data head `head` needs at batch `day_index`: its click day and
/// every conversion day from there through `day_index`.
pub fn batch_requirements(windows: &DelayWindows, head: usize, day_index: i64) -> Result<(i64, std::ops::RangeInclusive<i64>)> {
    let days = windows
        .days()
        .ok_or_else(|| Error::config("batch mode needs windows aligned to whole days"))?;
    let click_day = day_index - days[head + 1] as i64;
    Ok((click_day, click_day..=day_index))
}

/// Runs the daily batch for `day_index`.
///
/// Head `i` with window `(d_{i-1}, d_i]` days trains on the clicks of day
/// `day_index - d_i`, labelled from conversions in partitions up through
/// `day_index`. Training happens at the end of `day_index`.
pub fn advance_batch<F: Scalar>(
    day_index: i64,
    parts: &DailyPartitions<F>,
    mh: &mut MultiHeadModel<F>,
    cfg: &TrainConfig<F>,
    mut trace: Option<&mut Vec<TrainRecord<F>>>,
) -> Result<()> {
    let windows = mh.windows().clone();
    if !windows.is_day_aligned() {
        return Err(Error::config("batch mode needs windows aligned to whole days"));
    }
    let mut missing = Vec::new();
    let mut plan = Vec::with_capacity(windows.n_heads());
    for head in 0..windows.n_heads() {
        let (click_day, conv_days) = batch_requirements(&windows, head, day_index)?;
        let clicks = parts.required(click_day, &mut missing);
        let convs: Vec<&Partition<F>> = conv_days.filter_map(|d| parts.required(d, &mut missing)).collect();
        plan.push((head, clicks, convs));
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(Error::MissingPartitions { days: missing });
    }

    let now = (day_index + 1) as u64 * DAY;
    let kind = mh.kind();
    for (head, clicks, convs) in plan {
        let Some(clicks) = clicks else { continue };
        let joined: HashMap<&str, (u64, F)> = convs
            .iter()
            .flat_map(|p| p.conversions.iter())
            .map(|c| (c.click_id.as_str(), (c.conversion_ts, c.value)))
            .collect();
        let wait = windows.wait(head);
        for click in &clicks.clicks {
            let labels = match joined.get(click.click_id.as_str()) {
                Some(&(ts, v)) => {
                    let delay = ts.checked_sub(click.click_ts).filter(|&d| d > 0).ok_or_else(|| {
                        Error::input(format!("conversion for {} precedes its click", click.click_id))
                    })?;
                    quantize(Some(delay), Some(v), &windows)?
                }
                None => quantize(None, None, &windows)?,
            };
            let label = labels.label(head, kind);
            train_checked(mh.head_mut(head), head, wait, click, label, now, cfg)?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(TrainRecord {
                    head,
                    click_id: click.click_id.clone(),
                    click_ts: click.click_ts,
                    label,
                    at: now,
                });
            }
        }
    }
    Ok(())
}

const CLICKS_FILE: &str = "clicks.tsv";
const CONVERSIONS_FILE: &str = "conversions.tsv";
const PARTITIONS_MANIFEST: &str = "partitions.txt";

/// Writes records as day partitions under `dir`: one directory per day
/// index holding `clicks.tsv` (generated layout, conversion columns empty)
/// and `conversions.tsv` (`click_id`, `conversion_ts`, `value`), plus a
/// `partitions.txt` manifest naming the first and last day.
pub fn write_partitions(records: &[RawRecord], dir: &Path) -> Result<()> {
    let mut clicks: BTreeMap<i64, Vec<RawRecord>> = BTreeMap::new();
    let mut convs: BTreeMap<i64, Vec<(String, u64, f64)>> = BTreeMap::new();
    for r in records {
        let mut c = r.clone();
        c.conversion_delay = None;
        c.conversion_value = None;
        clicks.entry(day_of(r.click_ts)).or_default().push(c);
        if let (Some(d), Some(v)) = (r.conversion_delay, r.conversion_value) {
            let ts = r.click_ts + d;
            convs.entry(day_of(ts)).or_default().push((r.click_id.clone(), ts, v));
        }
    }
    let first = clicks.keys().next().copied().unwrap_or(0);
    let last = clicks
        .keys()
        .chain(convs.keys())
        .copied()
        .max()
        .unwrap_or(first);
    for day in first..=last {
        let d = dir.join(day.to_string());
        fs::create_dir_all(&d)?;
        let day_clicks = clicks.remove(&day).unwrap_or_default();
        write_tsv(BufWriter::new(fs::File::create(d.join(CLICKS_FILE))?), &day_clicks)?;
        let mut out = BufWriter::new(fs::File::create(d.join(CONVERSIONS_FILE))?);
        writeln!(out, "click_id\tconversion_ts\tvalue")?;
        for (id, ts, v) in convs.remove(&day).unwrap_or_default() {
            writeln!(out, "{id}\t{ts}\t{v}")?;
        }
        out.flush()?;
    }
    let field_names: Vec<String> = records
        .first()
        .map(|r| r.fields.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut m = BufWriter::new(fs::File::create(dir.join(PARTITIONS_MANIFEST))?);
    writeln!(m, "first_day={first}")?;
    writeln!(m, "last_day={last}")?;
    writeln!(m, "fields={}", field_names.join(","))?;
    m.flush()?;
    Ok(())
}

struct Manifest {
    first_day: i64,
    last_day: i64,
    fields: Vec<String>,
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(PARTITIONS_MANIFEST))?;
    let (mut first_day, mut last_day, mut fields) = (None, None, Vec::new());
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("first_day=") {
            first_day = v.trim().parse::<i64>().ok();
        } else if let Some(v) = line.strip_prefix("last_day=") {
            last_day = v.trim().parse::<i64>().ok();
        } else if let Some(v) = line.strip_prefix("fields=") {
            fields = v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
        }
    }
    match (first_day, last_day) {
        (Some(first_day), Some(last_day)) if first_day <= last_day => Ok(Manifest { first_day, last_day, fields }),
        _ => Err(Error::input("partition manifest needs first_day <= last_day")),
    }
}

/// First and last day listed in the manifest under `dir`.
pub fn partition_range(dir: &Path) -> Result<(i64, i64)> {
    read_manifest(dir).map(|m| (m.first_day, m.last_day))
}

/// Loads the partitions under `dir` for `days`. Days absent on disk are
/// left out, so [`advance_batch`] reports them as missing.
pub fn read_partitions<F: Scalar>(dir: &Path, days: impl IntoIterator<Item = i64>, cfg: &FeatureConfig) -> Result<DailyPartitions<F>> {
    let manifest = read_manifest(dir)?;
    let (first_day, fields) = (manifest.first_day, manifest.fields);
    let schema = Schema::generated(&fields);
    let mut out = DailyPartitions::new(first_day);
    for day in days {
        let d = dir.join(day.to_string());
        if !d.is_dir() {
            continue;
        }
        let batch = read_tsv(
            BufReader::new(fs::File::open(d.join(CLICKS_FILE))?),
            &schema,
            u64::MAX,
            ErrorPolicy::Abort,
        )?;
        let mut part = Partition::default();
        for r in batch.records {
            part.clicks.push(Click {
                x: featurize(&r.fields, cfg)?,
                click_id: r.click_id,
                click_ts: r.click_ts,
            });
        }
        let conv = BufReader::new(fs::File::open(d.join(CONVERSIONS_FILE))?);
        for (i, line) in conv.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse { line: i + 1, msg: format!("bad conversion row in day {day}") };
            let mut cells = line.split('\t');
            let id = cells.next().ok_or_else(bad)?;
            let ts = cells.next().and_then(|s| s.parse::<u64>().ok()).ok_or_else(bad)?;
            let v = cells.next().and_then(|s| s.parse::<f64>().ok()).ok_or_else(bad)?;
            part.conversions.push(ConversionEvent {
                click_id: id.to_string(),
                conversion_ts: ts,
                value: F::cast(v),
            });
        }
        out.insert(day, part);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::GlmKind;

    fn click(id: &str, ts: u64) -> Click<f64> {
        Click {
            click_id: id.into(),
            click_ts: ts,
            x: SparseVector::from_terms(vec![(1, 1.0)]).unwrap(),
        }
    }

    fn windows() -> DelayWindows {
        DelayWindows::from_days(&[1, 2, 5, 12, 30]).unwrap()
    }

    #[test]
    fn log_rejects_out_of_order_and_duplicates() {
        let mut log = ClickLog::new();
        log.push(click("a", 10)).unwrap();
        assert!(log.push(click("b", 5)).is_err());
        assert!(log.push(click("a", 11)).is_err());
        log.push(click("c", 10)).unwrap();
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn store_keeps_first_conversion() {
        let mut s = ConversionStore::<f64>::new();
        assert!(s.insert("a", 5, 1.0).unwrap());
        assert!(!s.insert("a", 9, 2.0).unwrap());
        assert_eq!(s.get("a"), Some((5, 1.0)));
        assert!(s.insert("b", 0, 1.0).is_err());
    }

    #[test]
    fn nothing_before_wait() {
        let mut log = ClickLog::new();
        log.push(click("a", 0)).unwrap();
        let store = ConversionStore::new();
        let mut mh = MultiHeadModel::new(GlmKind::Logistic, 4, windows()).unwrap();
        let mut st = StreamState::new(5);
        st.advance(&log, &store, &mut mh, &TrainConfig::default(), DAY / 2).unwrap();
        assert_eq!(st.consumed(), &[0, 0, 0, 0, 0]);
        assert!(st
            .advance(&log, &store, &mut mh, &TrainConfig::default(), DAY / 4)
            .is_err());
    }

    #[test]
    fn day_and_a_half_conversion_labels() {
        let mut log = ClickLog::new();
        log.push(click("a", 0)).unwrap();
        let mut store = ConversionStore::new();
        store.insert("a", DAY + DAY / 2, 1.0).unwrap();
        let mut mh = MultiHeadModel::new(GlmKind::Logistic, 4, windows()).unwrap();
        let mut st = StreamState::new(5).with_trace();
        st.advance(&log, &store, &mut mh, &TrainConfig::default(), 2 * DAY).unwrap();
        let t = st.trace().unwrap();
        assert_eq!(t[0].len(), 1);
        assert_eq!(t[0][0].label, 0.0);
        assert_eq!(t[0][0].at, 2 * DAY);
        assert_eq!(t[1][0].label, 1.0);
        assert!(t[2].is_empty());
    }

    #[test]
    fn store_delay_beyond_window_is_an_error() {
        let mut log = ClickLog::new();
        log.push(click("a", 0)).unwrap();
        let mut store = ConversionStore::new();
        store.insert("a", 31 * DAY, 1.0).unwrap();
        let mut mh = MultiHeadModel::new(GlmKind::Logistic, 4, windows()).unwrap();
        let mut st = StreamState::new(5);
        assert!(st
            .advance(&log, &store, &mut mh, &TrainConfig::default(), 40 * DAY)
            .is_err());
    }

    #[test]
    fn parallel_workers_match_serial() {
        let mut log = ClickLog::new();
        let mut store = ConversionStore::new();
        for i in 0..6_000u64 {
            let id = format!("c{i}");
            log.push(Click {
                click_id: id.clone(),
                click_ts: i * 300,
                x: SparseVector::from_terms(vec![((i % 13) as u32, 1.0), (20 + (i % 7) as u32, 1.0)]).unwrap(),
            })
            .unwrap();
            if i % 4 == 0 {
                store.insert(&id, 1 + (i * 7919) % (30 * DAY), (i % 9) as f64).unwrap();
            }
        }
        let cfg = TrainConfig::default();
        let mut a = MultiHeadModel::new(GlmKind::Linear, 6, windows()).unwrap();
        let mut b = a.clone();
        let mut sa = StreamState::new(5);
        let mut sb = StreamState::new(5).with_workers(3);
        // The last jump leaves enough pending work to run on threads.
        for clock in [0, DAY, 5 * DAY, 60 * DAY] {
            sa.advance(&log, &store, &mut a, &cfg, clock).unwrap();
            sb.advance(&log, &store, &mut b, &cfg, clock).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa.consumed(), sb.consumed());
    }

    #[test]
    fn batch_head_one_reads_previous_day() {
        let w = windows();
        let (click_day, convs) = batch_requirements(&w, 0, 10).unwrap();
        assert_eq!(click_day, 9);
        assert_eq!(convs, 9..=10);
        let (click_day, convs) = batch_requirements(&w, 4, 40).unwrap();
        assert_eq!(click_day, 10);
        assert_eq!(*convs.end(), 40);
    }

    #[test]
    fn batch_rejects_unaligned_windows_and_missing_days() {
        let parts = DailyPartitions::<f64>::new(0);
        let mut mh = MultiHeadModel::new(GlmKind::Logistic, 4, DelayWindows::new(vec![0, 3600, 30 * DAY]).unwrap()).unwrap();
        assert!(matches!(
            advance_batch(5, &parts, &mut mh, &TrainConfig::default(), None),
            Err(Error::Config(_))
        ));
        let mut mh = MultiHeadModel::new(GlmKind::Logistic, 4, windows()).unwrap();
        match advance_batch(3, &parts, &mut mh, &TrainConfig::default(), None) {
            Err(Error::MissingPartitions { days }) => assert_eq!(days, vec![0, 1, 2, 3]),
            other => panic!("expected missing partitions, got {other:?}"),
        }
    }

    #[test]
    fn partitions_round_trip_through_files() {
        let recs: Vec<RawRecord> = (0..40u64)
            .map(|i| RawRecord {
                click_id: format!("k{i}"),
                click_ts: i * 10_000,
                fields: vec![("a".into(), format!("{}", i % 3)), ("b".into(), "z".into())],
                conversion_delay: (i % 5 == 0).then_some(2 * DAY + i),
                conversion_value: (i % 5 == 0).then_some(1.5),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        write_partitions(&recs, dir.path()).unwrap();
        let cfg = FeatureConfig { hash_bits: 10, ..Default::default() };
        let (log, store) = load_records::<f64>(&recs, &cfg).unwrap();
        let mem = DailyPartitions::from_log(&log, &store);
        let disk = read_partitions::<f64>(dir.path(), mem.days(), &cfg).unwrap();
        for d in mem.days() {
            assert_eq!(mem.get(d), disk.get(d), "day {d}");
        }
        assert_eq!(disk.first_day(), 0);
    }
}
