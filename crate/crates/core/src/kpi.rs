//! Worker KPIs, their baselines and the expert/inexpert trigger rules.
//!
//! | KPI       | expert trigger (Over) | inexpert trigger (Under) |
//! |-----------|-----------------------|--------------------------|
//! | `N_inc`   | `Q1 > N_inc`          | `N_inc > Q3`             |
//! | `N_inv`   | `Q1 > N_inv`          | `N_inv > Q3`             |
//! | `N_val`   | `Q3 < N_val`          | `N_val < Q1`             |
//! | `N_task`  | `Q3 < N_task`         | `N_task < Q1`            |
//! | `T_val`   | `Q1 > T_val`          | `T_val > Q3`             |
//! | `T_total` | `Q1 > T_total`        | `T_total > Q3`           |
//!
//! Triggers only fire where the baseline is applicable, i.e. it has at
//! least [`MIN_CONTRIBUTORS`] days (or peers) and `Q1 < avg < Q3`.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::features::quartiles;
use crate::model::{SessionRecord, WorkerId};
use crate::store::{day_of, Store};

pub const MIN_CONTRIBUTORS: usize = 3;
pub const INTRA_WINDOW_DAYS: u64 = 7;

const EPOCH_DAYS_FROM_CE: i32 = 719_163;

pub fn epoch_day(date: NaiveDate) -> i64 {
    i64::from(chrono::Datelike::num_days_from_ce(&date) - EPOCH_DAYS_FROM_CE)
}

pub fn date_of_day(day: i64) -> Option<NaiveDate> {
    NaiveDate::from_num_days_from_ce_opt(i32::try_from(day).ok()? + EPOCH_DAYS_FROM_CE)
}

/// Calendar date (UTC) of an epoch timestamp.
pub fn date_of(t: f64) -> NaiveDate {
    date_of_day(day_of(t)).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kpi {
    NInc,
    NInv,
    NVal,
    NTask,
    TVal,
    TTotal,
}

impl Kpi {
    pub const ALL: [Kpi; 6] = [Kpi::NInc, Kpi::NInv, Kpi::NVal, Kpi::NTask, Kpi::TVal, Kpi::TTotal];

    /// Row number in the KPI table (1-based).
    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap_or(0) + 1
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Kpi::NInc => "N_inc",
            Kpi::NInv => "N_inv",
            Kpi::NVal => "N_val",
            Kpi::NTask => "N_task",
            Kpi::TVal => "T_val",
            Kpi::TTotal => "T_total",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Kpi::NInc => "number of incidences",
            Kpi::NInv => "number of invalid pieces",
            Kpi::NVal => "number of valid pieces",
            Kpi::NTask => "number of tasks",
            Kpi::TVal => "time between valid pieces",
            Kpi::TTotal => "total time",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Kpi::NVal | Kpi::NTask)
    }
}

impl fmt::Display for Kpi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// KPI values of one worker on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSnapshot {
    pub worker_id: WorkerId,
    pub date: NaiveDate,
    pub n_inc: u32,
    pub n_inv: u32,
    pub n_val: u32,
    pub n_task: u32,
    /// Mean over tasks of the mean gap between valid pieces, seconds.
    pub t_val: f64,
    /// Mean task duration, seconds.
    pub t_total: f64,
    /// No tasks that day.
    pub empty: bool,
}

impl KpiSnapshot {
    pub fn value(&self, kpi: Kpi) -> f64 {
        match kpi {
            Kpi::NInc => f64::from(self.n_inc),
            Kpi::NInv => f64::from(self.n_inv),
            Kpi::NVal => f64::from(self.n_val),
            Kpi::NTask => f64::from(self.n_task),
            Kpi::TVal => self.t_val,
            Kpi::TTotal => self.t_total,
        }
    }
}

/// Mean gap between valid pieces of one task; tasks with fewer than two
/// valid pieces report their total time.
pub fn session_valid_gap(s: &SessionRecord) -> f64 {
    if s.time_between_valid.is_empty() {
        s.total_time
    } else {
        s.time_between_valid.iter().sum::<f64>() / s.time_between_valid.len() as f64
    }
}

pub fn snapshot_from_sessions(worker: &WorkerId, date: NaiveDate, sessions: &[&SessionRecord]) -> KpiSnapshot {
    let n = sessions.len();
    let mean = |f: &dyn Fn(&SessionRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            sessions.iter().map(|s| f(s)).sum::<f64>() / n as f64
        }
    };
    KpiSnapshot {
        worker_id: worker.clone(),
        date,
        n_inc: sessions.iter().map(|s| s.n_incidences).sum(),
        n_inv: sessions.iter().map(|s| s.n_invalid).sum(),
        n_val: sessions.iter().map(|s| s.n_valid).sum(),
        n_task: n as u32,
        t_val: mean(&session_valid_gap),
        t_total: mean(&|s| s.total_time),
        empty: n == 0,
    }
}

pub fn daily_kpis(store: &Store, worker: &WorkerId, date: NaiveDate) -> KpiSnapshot {
    let sessions = store.sessions_on_day(worker, epoch_day(date));
    snapshot_from_sessions(worker, date, &sessions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineWindow {
    /// The worker's own previous seven days.
    IntraWeekly,
    /// Other workers on the same day.
    InterDaily,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiStat {
    pub avg: f64,
    pub q1: f64,
    pub q3: f64,
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiBaseline {
    pub window: BaselineWindow,
    /// Days (intra) or peers (inter) that entered the statistics.
    pub contributors: usize,
    pub stats: BTreeMap<Kpi, KpiStat>,
}

impl KpiBaseline {
    pub fn stat(&self, kpi: Kpi) -> KpiStat {
        self.stats[&kpi]
    }
}

/// Mean and quartiles of `values`; applicable with at least
/// [`MIN_CONTRIBUTORS`] values and `q1 < avg < q3`.
pub fn stat_of(values: &[f64]) -> KpiStat {
    let enough = values.len() >= MIN_CONTRIBUTORS;
    match quartiles(values) {
        Ok(q) => KpiStat { avg: q.avg, q1: q.q1, q3: q.q3, applicable: enough && q.q1 < q.avg && q.avg < q.q3 },
        Err(_) => KpiStat { avg: 0.0, q1: 0.0, q3: 0.0, applicable: false },
    }
}

/// Baseline statistics over non-empty snapshots.
pub fn baseline_from_snapshots(window: BaselineWindow, snapshots: &[KpiSnapshot]) -> KpiBaseline {
    let used: Vec<&KpiSnapshot> = snapshots.iter().filter(|s| !s.empty).collect();
    let stats = Kpi::ALL
        .iter()
        .map(|&k| {
            let values: Vec<f64> = used.iter().map(|s| s.value(k)).collect();
            (k, stat_of(&values))
        })
        .collect();
    KpiBaseline { window, contributors: used.len(), stats }
}

/// The worker's own days `[date − 7, date − 1]`; the query day is excluded.
pub fn intra_baseline(store: &Store, worker: &WorkerId, date: NaiveDate) -> KpiBaseline {
    let snapshots: Vec<KpiSnapshot> = (1..=INTRA_WINDOW_DAYS)
        .filter_map(|back| date.checked_sub_days(Days::new(back)))
        .map(|d| daily_kpis(store, worker, d))
        .collect();
    baseline_from_snapshots(BaselineWindow::IntraWeekly, &snapshots)
}

/// Every other worker's snapshot for `date`.
pub fn inter_baseline(store: &Store, date: NaiveDate, exclude: &WorkerId) -> KpiBaseline {
    let snapshots: Vec<KpiSnapshot> =
        store.workers().iter().filter(|w| *w != exclude).map(|w| daily_kpis(store, w, date)).collect();
    baseline_from_snapshots(BaselineWindow::InterDaily, &snapshots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiStatus {
    /// Expert trigger fired.
    Over,
    /// Inexpert trigger fired.
    Under,
    Neutral,
}

impl KpiStatus {
    /// Dashboard box colour.
    pub fn colour(self) -> &'static str {
        match self {
            KpiStatus::Over => "green",
            KpiStatus::Under => "red",
            KpiStatus::Neutral => "blue",
        }
    }
}

/// Applies one trigger row. Equality with a quartile is neutral.
pub fn trigger(value: f64, stat: &KpiStat, higher_is_better: bool) -> KpiStatus {
    if !stat.applicable {
        return KpiStatus::Neutral;
    }
    let (good, bad) =
        if higher_is_better { (value > stat.q3, value < stat.q1) } else { (value < stat.q1, value > stat.q3) };
    if good {
        KpiStatus::Over
    } else if bad {
        KpiStatus::Under
    } else {
        KpiStatus::Neutral
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiVerdict {
    pub statuses: BTreeMap<Kpi, KpiStatus>,
}

impl KpiVerdict {
    pub fn status(&self, kpi: Kpi) -> KpiStatus {
        self.statuses.get(&kpi).copied().unwrap_or(KpiStatus::Neutral)
    }

    pub fn neutral() -> Self {
        Self { statuses: Kpi::ALL.iter().map(|&k| (k, KpiStatus::Neutral)).collect() }
    }

    pub fn any_over(&self) -> bool {
        self.statuses.values().any(|s| *s == KpiStatus::Over)
    }
}

pub fn verdict(snapshot: &KpiSnapshot, baseline: &KpiBaseline) -> KpiVerdict {
    KpiVerdict {
        statuses: Kpi::ALL
            .iter()
            .map(|&k| (k, trigger(snapshot.value(k), &baseline.stat(k), k.higher_is_better())))
            .collect(),
    }
}
