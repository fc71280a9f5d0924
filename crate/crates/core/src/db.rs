//! Append-only JSONL store of training runs.
//!
//! One JSON object per line, each with a `schema_version`. Writes are
//! serialized through an internal lock plus an advisory file lock and
//! synced before returning. Readers take cheap immutable snapshots.
//!
//! A torn final line (a crash mid-write) is skipped on load with a warning;
//! the next append starts on a fresh line so earlier records are never
//! touched.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::FeatureLabels;
use crate::space::{Axis, AxisValue, HyperConfig, SearchSpace};
use crate::tree::RewardTransform;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("duplicate run id {0}")]
    DuplicateRunId(String),
    #[error("invalid record {run_id}: {reason}")]
    InvalidRecord { run_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Bootstrap,
    Mtrs,
    Random,
    Tpe,
    SeededRetrieval,
    Llm,
    /// Tree search arm of an ablation run with retrieval disabled.
    MtrsNoPgkr,
    /// Ablation arm that samples from the prior without tree statistics.
    PolicySample,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Bootstrap => "bootstrap",
            Provenance::Mtrs => "mtrs",
            Provenance::Random => "random",
            Provenance::Tpe => "tpe",
            Provenance::SeededRetrieval => "seeded-retrieval",
            Provenance::Llm => "llm",
            Provenance::MtrsNoPgkr => "mtrs-no-pgkr",
            Provenance::PolicySample => "policy-sample",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the database. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub pde_id: String,
    pub labels: FeatureLabels,
    pub config: HyperConfig,
    /// Test MSE; `None` when training diverged before producing one.
    pub mse: Option<f64>,
    pub reward: f64,
    pub reward_transform: RewardTransform,
    pub diverged: bool,
    pub provenance: Provenance,
    pub iteration: u32,
    pub wall_time_s: f64,
    /// RFC 3339.
    pub timestamp: String,
    /// Master seed of the experiment that produced this run.
    pub seed: u64,
}

pub fn new_run_id() -> String {
    ulid::Ulid::new().to_string()
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunRecord {
    /// MSE of a run that finished; `None` for diverged runs.
    pub fn completed_mse(&self) -> Option<f64> {
        if self.diverged {
            None
        } else {
            self.mse.filter(|m| m.is_finite())
        }
    }

    /// Copy with run id, timestamp and wall time cleared, for comparing
    /// experiments.
    pub fn stable(&self) -> RunRecord {
        RunRecord {
            run_id: String::new(),
            timestamp: String::new(),
            wall_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        match (self.diverged, self.mse) {
            (false, Some(m)) if m.is_finite() && m >= 0.0 => {}
            (false, _) => return Err("mse must be finite and non-negative unless diverged".into()),
            (true, Some(m)) if !(m >= 0.0) => return Err("mse must be non-negative".into()),
            (true, _) => {}
        }
        if !self.reward.is_finite() {
            return Err("reward must be finite".into());
        }
        SearchSpace::paper(self.labels.time_dependence)
            .validate(&self.config)
            .map_err(|v| v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))
    }
}

/// Which PDEs an aggregate covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PdeFilter {
    Any,
    Only(String),
    Except(String),
}

impl PdeFilter {
    pub fn matches(&self, pde_id: &str) -> bool {
        match self {
            PdeFilter::Any => true,
            PdeFilter::Only(p) => p == pde_id,
            PdeFilter::Except(p) => p != pde_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueStat {
    pub value: AxisValue,
    pub count: usize,
    pub mean_reward: f64,
}

/// Per-value `(count, mean reward)` of `axis` over completed runs, in order
/// of first appearance. With `transform` set, rewards are recomputed from the
/// MSE so that runs stored under different transforms are comparable.
pub fn axis_stats(
    records: &[RunRecord],
    filter: &PdeFilter,
    axis: Axis,
    transform: Option<RewardTransform>,
) -> Vec<ValueStat> {
    let mut out: Vec<(AxisValue, usize, f64)> = Vec::new();
    for r in records {
        let Some(mse) = r.completed_mse() else { continue };
        if !filter.matches(&r.pde_id) {
            continue;
        }
        let reward = transform.map_or(r.reward, |t| t.reward(mse).value);
        let v = r.config.get(axis);
        match out.iter_mut().find(|(x, _, _)| *x == v) {
            Some(e) => {
                e.1 += 1;
                e.2 += reward;
            }
            None => out.push((v, 1, reward)),
        }
    }
    out.into_iter()
        .map(|(value, count, sum)| ValueStat {
            value,
            count,
            mean_reward: sum / count as f64,
        })
        .collect()
}

/// Minimum-MSE completed record for `pde_id`; ties go to the earliest
/// timestamp, then to file order.
pub fn best_of<'a>(records: &'a [RunRecord], pde_id: &str) -> Option<&'a RunRecord> {
    let mut best: Option<(&RunRecord, f64)> = None;
    for r in records.iter().filter(|r| r.pde_id == pde_id) {
        let Some(m) = r.completed_mse() else { continue };
        let better = match best {
            None => true,
            Some((b, bm)) => m < bm || (m == bm && r.timestamp < b.timestamp),
        };
        if better {
            best = Some((r, m));
        }
    }
    best.map(|(r, _)| r)
}

struct Writer {
    file: File,
    records: Arc<Vec<RunRecord>>,
    ids: HashSet<String>,
    /// The file does not end in a newline (torn last line).
    unterminated: bool,
}

pub struct ExperimentDb {
    path: PathBuf,
    writer: Mutex<Writer>,
    skipped: usize,
}

impl std::fmt::Debug for ExperimentDb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentDb")
            .field("path", &self.path)
            .field("len", &self.len())
            .finish()
    }
}

impl ExperimentDb {
    /// Open or create the database at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DbError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| DbError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        let bytes = std::fs::read(&path).map_err(io_err)?;
        let unterminated = bytes.last().is_some_and(|b| *b != b'\n');

        let mut records = Vec::new();
        let mut ids = HashSet::new();
        let mut skipped = 0;
        for (lineno, line) in bytes.split(|b| *b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            match serde_json::from_slice::<RunRecord>(line) {
                Ok(r) if ids.contains(&r.run_id) => {
                    tracing::warn!(path = %path.display(), line = lineno + 1, run_id = %r.run_id, "skipping duplicate run id");
                    skipped += 1;
                }
                Ok(r) => {
                    ids.insert(r.run_id.clone());
                    records.push(r);
                }
                Err(e) => {
                    tracing::warn!(path = %path.display(), line = lineno + 1, error = %e, "skipping unreadable line");
                    skipped += 1;
                }
            }
        }
        Ok(Self {
            path,
            writer: Mutex::new(Writer {
                file,
                records: Arc::new(records),
                ids,
                unterminated,
            }),
            skipped,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Lines skipped on load (torn, unparsable or duplicated).
    pub fn skipped_lines(&self) -> usize {
        self.skipped
    }

    pub fn len(&self) -> usize {
        self.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Immutable view of every record loaded or appended so far.
    pub fn snapshot(&self) -> Arc<Vec<RunRecord>> {
        Arc::clone(&self.lock().records)
    }

    pub fn append(&self, record: RunRecord) -> Result<(), DbError> {
        record.check().map_err(|reason| DbError::InvalidRecord {
            run_id: record.run_id.clone(),
            reason,
        })?;
        let mut w = self.lock();
        if w.ids.contains(&record.run_id) {
            return Err(DbError::DuplicateRunId(record.run_id));
        }
        let mut line = String::new();
        if w.unterminated {
            line.push('\n');
        }
        line.push_str(&serde_json::to_string(&record).expect("records serialize"));
        line.push('\n');
        let io_err = |source| DbError::Io {
            path: self.path.clone(),
            source,
        };
        w.file.lock().map_err(io_err)?;
        let written = w.file.write_all(line.as_bytes()).and_then(|_| w.file.sync_data());
        let _ = w.file.unlock();
        written.map_err(io_err)?;
        w.unterminated = false;
        w.ids.insert(record.run_id.clone());
        Arc::make_mut(&mut w.records).push(record);
        Ok(())
    }

    pub fn query_best(&self, pde_id: &str) -> Option<RunRecord> {
        best_of(&self.snapshot(), pde_id).cloned()
    }

    pub fn axis_stats(&self, filter: &PdeFilter, axis: Axis, transform: Option<RewardTransform>) -> Vec<ValueStat> {
        axis_stats(&self.snapshot(), filter, axis, transform)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::catalog;
    use crate::space::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn record(pde: &str, mse: Option<f64>, seed: u64) -> RunRecord {
        let spec = catalog::get(pde).unwrap();
        let config = SearchSpace::tree(spec.time_dependent).random_sample(seed);
        let diverged = mse.is_none();
        RunRecord {
            schema_version: SCHEMA_VERSION,
            run_id: new_run_id(),
            pde_id: pde.to_string(),
            labels: spec.labels,
            config,
            mse,
            reward: mse.map_or(-1.0, |m| -m),
            reward_transform: RewardTransform::Raw,
            diverged,
            provenance: Provenance::Bootstrap,
            iteration: 0,
            wall_time_s: 0.1,
            timestamp: now_rfc3339(),
            seed,
        }
    }

    fn temp_db() -> (tempfile::TempDir, ExperimentDb) {
        let dir = tempfile::tempdir().unwrap();
        let db = ExperimentDb::open(dir.path().join("runs.jsonl")).unwrap();
        (dir, db)
    }

    #[test]
    fn empty_db() {
        let (_d, db) = temp_db();
        assert!(db.query_best("poisson1d").is_none());
        assert!(db.axis_stats(&PdeFilter::Any, Axis::Activation, None).is_empty());
    }

    #[test]
    fn append_then_query() {
        let (_d, db) = temp_db();
        let r = record("poisson1d", Some(0.5), 1);
        db.append(r.clone()).unwrap();
        assert_eq!(db.query_best("poisson1d"), Some(r));
    }

    #[test]
    fn duplicate_run_id_rejected() {
        let (_d, db) = temp_db();
        let r = record("poisson1d", Some(0.5), 1);
        db.append(r.clone()).unwrap();
        assert!(matches!(db.append(r), Err(DbError::DuplicateRunId(_))));
        assert_eq!(db.len(), 1);
    }

    #[test]
    fn invalid_records_rejected() {
        let (_d, db) = temp_db();
        let mut r = record("poisson1d", Some(0.5), 1);
        r.mse = Some(-1.0);
        assert!(matches!(db.append(r.clone()), Err(DbError::InvalidRecord { .. })));
        r.mse = Some(0.1);
        r.config.width = 7;
        assert!(matches!(db.append(r), Err(DbError::InvalidRecord { .. })));
    }

    #[test]
    fn thousand_appends_thousand_lines() {
        let (_d, db) = temp_db();
        for i in 0..1000 {
            db.append(record("heat1d", Some(i as f64), i)).unwrap();
        }
        let text = std::fs::read_to_string(db.path()).unwrap();
        assert_eq!(text.lines().count(), 1000);
        assert_eq!(ExperimentDb::open(db.path()).unwrap().len(), 1000);
    }

    #[test]
    fn best_skips_diverged() {
        let (_d, db) = temp_db();
        db.append(record("poisson1d", Some(1e-2), 1)).unwrap();
        let good = record("poisson1d", Some(3e-4), 2);
        db.append(good.clone()).unwrap();
        db.append(record("poisson1d", None, 3)).unwrap();
        assert_eq!(db.query_best("poisson1d"), Some(good));
    }

    #[test]
    fn best_matches_linear_scan() {
        let (_d, db) = temp_db();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pdes = ["poisson1d", "heat1d", "wave1d"];
        for i in 0..500 {
            let pde = pdes[rng.random_range(0..3)];
            let mse = if rng.random::<f64>() < 0.1 {
                None
            } else {
                Some((rng.random_range(0..50) as f64) * 1e-3)
            };
            db.append(record(pde, mse, i)).unwrap();
        }
        let snap = db.snapshot();
        for pde in pdes {
            let mut scan: Option<&RunRecord> = None;
            for r in snap.iter() {
                if r.pde_id != pde || r.diverged {
                    continue;
                }
                if scan.is_none_or(|s| r.mse.unwrap() < s.mse.unwrap()) {
                    scan = Some(r);
                }
            }
            assert_eq!(db.query_best(pde).as_ref(), scan);
        }
    }

    #[test]
    fn best_is_monotone_over_appends() {
        let (_d, db) = temp_db();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut last = f64::INFINITY;
        for i in 0..100 {
            db.append(record("poisson1d", Some(rng.random::<f64>()), i)).unwrap();
            let best = db.query_best("poisson1d").unwrap().mse.unwrap();
            assert!(best <= last);
            last = best;
        }
    }

    #[test]
    fn stats_mean_reward() {
        let (_d, db) = temp_db();
        for (m, s) in [(0.2, 1), (0.4, 2)] {
            let mut r = record("poisson1d", Some(m), s);
            r.config.activation = Activation::Tanh;
            db.append(r).unwrap();
        }
        let stats = db.axis_stats(&PdeFilter::Any, Axis::Activation, None);
        assert_eq!(stats.len(), 1);
        assert_eq!(stats[0].value, AxisValue::Activation(Activation::Tanh));
        assert_eq!(stats[0].count, 2);
        assert!((stats[0].mean_reward + 0.3).abs() < 1e-15);
    }

    #[test]
    fn stats_match_independent_aggregation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records: Vec<_> = (0..100)
            .map(|i| {
                let pde = if i % 3 == 0 { "heat1d" } else { "poisson1d" };
                let mse = if i % 11 == 0 { None } else { Some(rng.random::<f64>()) };
                record(pde, mse, i)
            })
            .collect();
        let filter = PdeFilter::Except("heat1d".into());
        let stats = axis_stats(&records, &filter, Axis::Width, Some(RewardTransform::Log));
        for s in &stats {
            let AxisValue::Count(w) = s.value else { panic!() };
            let rewards: Vec<f64> = records
                .iter()
                .filter(|r| r.pde_id != "heat1d" && !r.diverged && r.config.width == w)
                .map(|r| -r.mse.unwrap().max(1e-12).log10())
                .collect();
            assert_eq!(s.count, rewards.len());
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            assert!((s.mean_reward - mean).abs() < 1e-12);
        }
        let total: usize = stats.iter().map(|s| s.count).sum();
        assert_eq!(
            total,
            records.iter().filter(|r| r.pde_id != "heat1d" && !r.diverged).count()
        );
    }

    #[test]
    fn torn_final_line_is_skipped() {
        let (_d, db) = temp_db();
        for i in 0..3 {
            db.append(record("poisson1d", Some(0.1 * (i + 1) as f64), i)).unwrap();
        }
        let path = db.path().to_path_buf();
        drop(db);
        let full = serde_json::to_string(&record("poisson1d", Some(0.01), 9)).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&full.as_bytes()[..full.len() / 2]).unwrap();
        drop(f);

        let db = ExperimentDb::open(&path).unwrap();
        assert_eq!(db.len(), 3);
        assert_eq!(db.skipped_lines(), 1);
        db.append(record("poisson1d", Some(0.05), 10)).unwrap();
        let again = ExperimentDb::open(&path).unwrap();
        assert_eq!(again.len(), 4);
        assert_eq!(again.query_best("poisson1d").unwrap().mse, Some(0.05));
    }

    #[test]
    fn line_keys_are_exact() {
        let (_d, db) = temp_db();
        db.append(record("wave1d", Some(0.1), 1)).unwrap();
        let text = std::fs::read_to_string(db.path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = vec![
            "schema_version",
            "run_id",
            "pde_id",
            "labels",
            "config",
            "mse",
            "reward",
            "reward_transform",
            "diverged",
            "provenance",
            "iteration",
            "wall_time_s",
            "timestamp",
            "seed",
        ];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
        assert_eq!(v["provenance"], "bootstrap");
    }

    #[test]
    fn snapshots_are_immutable() {
        let (_d, db) = temp_db();
        db.append(record("poisson1d", Some(0.1), 1)).unwrap();
        let snap = db.snapshot();
        db.append(record("poisson1d", Some(0.2), 2)).unwrap();
        assert_eq!(snap.len(), 1);
        assert_eq!(db.snapshot().len(), 2);
    }

    #[test]
    fn provenance_names() {
        for p in [
            Provenance::SeededRetrieval,
            Provenance::MtrsNoPgkr,
            Provenance::PolicySample,
        ] {
            assert_eq!(serde_json::to_value(p).unwrap(), p.as_str());
        }
    }
}
