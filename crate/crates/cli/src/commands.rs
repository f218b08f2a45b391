use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mhol::baselines::{NaiveLearner, OracleLearner, ShiftedLearner};
use mhol::datagen::generate;
use mhol::eval::{comparison_table, reports_from_csv, reports_to_csv, table_to_csv, EvalReport};
use mhol::experiment::make_learner;
use mhol::features::{read_tsv, write_tsv, RawRecord};
use mhol::quantizer::{head_share, SnapPolicy};
use mhol::stream::{advance_batch, load_records, partition_range, read_partitions, write_partitions};
use mhol::{
    design_windows, windowed_eval, ClickLog, ConversionStore, DelayWindows, Error, EvalHorizon, GlmModel, Method,
    MholLearner, MultiHeadModel, OnlineLearner, Result, RunSpec, Schema, StreamState,
};

use crate::config::{Config, Mode};

pub struct Context {
    cfg: Config,
    base: PathBuf,
}

impl Context {
    pub fn new(cfg: Config) -> Self {
        let base = cfg.data.dir.clone().unwrap_or_else(|| PathBuf::from("."));
        Context { cfg, base }
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn windows(&self) -> Result<DelayWindows> {
        self.cfg.windows.resolve()
    }

    fn schema_for(&self, input: &Path, schema: Option<&Path>) -> Result<Schema> {
        let path = match schema {
            Some(s) => self.path(s),
            None => schema_path(input),
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::input(format!("cannot read schema {}: {e}", path.display())))?;
        Schema::parse(&text)
    }

    fn read_records(&self, input: &Path, schema: Option<&Path>) -> Result<Vec<RawRecord>> {
        let input = self.path(input);
        let schema = self.schema_for(&input, schema)?;
        let file = fs::File::open(&input).map_err(|e| Error::input(format!("cannot open {}: {e}", input.display())))?;
        let r = self.windows()?.full_window();
        let batch = read_tsv(BufReader::new(file), &schema, r, self.cfg.run.on_bad_record.into())?;
        if let Some(first) = batch.errors.first() {
            eprintln!("warning: skipped {} malformed lines; first: {first}", batch.errors.len());
        }
        if batch.records.is_empty() {
            return Err(Error::input(format!("{} holds no click records", input.display())));
        }
        let mut records = batch.records;
        records.sort_by_key(|r| r.click_ts);
        Ok(records)
    }

    fn read_stream(&self, input: &Path, schema: Option<&Path>) -> Result<(ClickLog<f64>, ConversionStore<f64>)> {
        let records = self.read_records(input, schema)?;
        load_records(&records, &self.cfg.features)
    }

    pub fn gen_data(&self, out: &Path, partitions: Option<&Path>) -> Result<()> {
        let g = &self.cfg.generator;
        let records: Vec<RawRecord> = generate(g)?.into_iter().map(|c| c.record).collect();
        let out = self.path(out);
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(fs::File::create(&out)?);
        write_tsv(&mut w, &records)?;
        w.flush()?;
        fs::write(schema_path(&out), Schema::generated(&g.field_names()).to_text())?;
        if let Some(dir) = partitions {
            write_partitions(&records, &self.path(dir))?;
        }
        let conversions = records.iter().filter(|r| r.converted()).count();
        println!("wrote {} clicks ({conversions} conversions) to {}", records.len(), out.display());
        Ok(())
    }

    pub fn design_windows(
        &self,
        input: &Path,
        schema: Option<&Path>,
        heads: usize,
        day_aligned: bool,
        out: Option<&Path>,
    ) -> Result<()> {
        let r = self.windows()?.full_window();
        let delays: Vec<u64> = self.read_records(input, schema)?.iter().filter_map(|r| r.conversion_delay).collect();
        let snap = if day_aligned { SnapPolicy::Day } else { SnapPolicy::Raw };
        let windows = design_windows(&delays, heads, r, snap)?;
        let shares = head_share(&delays, &windows)?;
        let snippet = match windows.days() {
            Some(d) => format!("[windows]\ndays = {:?}\n", &d[1..]),
            None => format!("[windows]\nseconds = {:?}\n", &windows.boundaries()[1..]),
        };
        print!("{snippet}");
        let shown: Vec<String> = shares.iter().map(|s| format!("{s:.3}")).collect();
        println!("# shares over {} conversions: {}", delays.len(), shown.join(" "));
        if let Some(p) = out {
            fs::write(self.path(p), snippet)?;
        }
        Ok(())
    }

    pub fn train(
        &self,
        input: Option<&Path>,
        partitions: Option<&Path>,
        schema: Option<&Path>,
        until: Option<u64>,
        out: &Path,
    ) -> Result<()> {
        let method = self.cfg.run.method()?;
        let kind = self.cfg.run.task.kind();
        let bits = self.cfg.features.hash_bits;
        let windows = self.windows()?;
        let train = self.cfg.train;
        let (mut model, events) = match self.cfg.run.mode {
            Mode::Batch => {
                let windows = match method {
                    Method::Mhol => windows,
                    Method::Shifted => DelayWindows::single(windows.full_window())?,
                    _ => return Err(Error::config(format!("batch mode trains mhol or shifted, not {method}"))),
                };
                if !windows.is_day_aligned() {
                    return Err(Error::config(format!("batch mode needs whole-day windows, got {windows}")));
                }
                let dir = self.path(partitions.ok_or_else(|| Error::config("batch mode needs --partitions"))?);
                let (first, last) = partition_range(&dir)?;
                let parts = read_partitions::<f64>(&dir, first..=last, &self.cfg.features)?;
                let mut mh = MultiHeadModel::new(kind, bits, windows)?;
                for day in first..=last {
                    advance_batch(day, &parts, &mut mh, &train, None)?;
                }
                let events = mh.heads().iter().map(|h| h.step()).sum();
                (mh, events)
            }
            Mode::Streaming => {
                let input = input.ok_or_else(|| Error::config("streaming mode needs --input"))?;
                let (log, store) = self.read_stream(input, schema)?;
                let clock = until.unwrap_or_else(|| log.last_ts().unwrap_or(0));
                let r = windows.full_window();
                let glm = || GlmModel::new(kind, bits);
                let single = |m: GlmModel<f64>| MultiHeadModel::from_heads(DelayWindows::single(r)?, vec![m]);
                match method {
                    Method::Mhol => {
                        let workers = match self.cfg.run.workers {
                            0 => windows.n_heads(),
                            w => w,
                        };
                        let state = StreamState::new(windows.n_heads()).with_workers(workers);
                        let mut l = MholLearner::new(MultiHeadModel::new(kind, bits, windows)?, train).with_state(state);
                        l.catch_up(&log, &store, clock, log.len())?;
                        let n = l.events();
                        (l.model, n)
                    }
                    Method::Shifted => {
                        let mut l = ShiftedLearner::new(glm()?, train, r)?;
                        l.catch_up(&log, &store, clock, log.len())?;
                        let n = l.events();
                        (single(l.model)?, n)
                    }
                    Method::Oracle => {
                        let mut l = OracleLearner::new(glm()?, train, r)?;
                        l.catch_up(&log, &store, clock, log.len())?;
                        let n = l.events();
                        (single(l.model)?, n)
                    }
                    Method::Naive => {
                        let mut l = NaiveLearner::new(glm()?, train, &log, &store);
                        l.catch_up(&log, &store, clock, log.len())?;
                        let n = l.events();
                        (single(l.model)?, n)
                    }
                }
            }
        };
        model.combine_clamp = self.cfg.serving.combine_clamp;
        model.floor_vpc = self.cfg.serving.floor_vpc;
        let out = self.path(out);
        model.save(&out)?;
        fs::write(out.join("run.toml"), self.cfg.to_toml())?;
        println!(
            "trained {method} ({}, {:?} mode) with {events} updates; checkpoint in {}",
            kind.as_str(),
            self.cfg.run.mode,
            out.display()
        );
        Ok(())
    }

    pub fn evaluate(&self, input: &Path, schema: Option<&Path>, out: &Path) -> Result<()> {
        let method = self.cfg.run.method()?;
        let spec = RunSpec {
            kind: self.cfg.run.task.kind(),
            hash_bits: self.cfg.features.hash_bits,
            windows: self.windows()?,
            train: self.cfg.train,
            eval_days: self.cfg.run.eval_days,
            workers: self.cfg.run.workers,
        };
        let (log, store) = self.read_stream(input, schema)?;
        let horizon = EvalHorizon::from_log(&log, spec.eval_days, spec.windows.full_window())?;
        let mut learner = make_learner(method, &spec, &log, &store)?;
        let report = windowed_eval(&log, &store, learner.as_mut(), &horizon, spec.train.clamp_eps)?;
        let out = self.path(out);
        fs::write(&out, reports_to_csv(std::slice::from_ref(&report)))?;
        println!("{}", summary(&report));
        Ok(())
    }

    pub fn report(&self, inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
        let mut reports: Vec<EvalReport<f64>> = Vec::new();
        for p in inputs {
            let p = self.path(p);
            let text = fs::read_to_string(&p).map_err(|e| Error::input(format!("cannot read {}: {e}", p.display())))?;
            reports.extend(reports_from_csv(&text)?);
        }
        let table = table_to_csv(&comparison_table(&reports)?);
        match out {
            Some(p) => fs::write(self.path(p), table)?,
            None => print!("{table}"),
        }
        Ok(())
    }
}

/// The schema file written next to a generated log.
fn schema_path(input: &Path) -> PathBuf {
    let mut s = input.as_os_str().to_owned();
    s.push(".schema");
    PathBuf::from(s)
}

fn summary(r: &EvalReport<f64>) -> String {
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    format!(
        "{} {}: nll {} rce {} mse {:.4} bias_pct {} over {} clicks (days {}-{})",
        r.model_name,
        r.task.as_str(),
        fmt(r.nll),
        fmt(r.rce),
        r.mse,
        fmt(r.bias_pct),
        r.n_examples,
        r.eval_window.0,
        r.eval_window.1
    )
}
