//! Annealing envelopes `A(s)`, `B(s)` and time-parameterized anneal paths.
//!
//! `a` weights the problem Hamiltonian and `b` the transverse-field driver:
//! `H(s) = a(s)·H_p + b(s)·H_d`. Schedules are tabulated and linearly
//! interpolated between rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// After normalization `a(0)` and `b(1)` must not exceed this.
pub const ENDPOINT_TOLERANCE: f64 = 0.02;

/// Hardware-compat limit on the number of path waypoints.
pub const MAX_HARDWARE_WAYPOINTS: usize = 12;

/// Default forward and reverse anneal duration in schedule-time units.
pub const DEFAULT_ANNEAL_TIME: f64 = 100.0;

pub const LINEAR_CSV: &str = include_str!("../schedules/linear.csv");
pub const STEEP_CSV: &str = include_str!("../schedules/steep.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub s: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    name: String,
    rows: Vec<ScheduleRow>,
}

impl Schedule {
    /// Validates and normalizes rows: `a` is scaled so `a(1) = 1` and `b` so
    /// `b(0) = 1`.
    pub fn from_rows(name: impl Into<String>, rows: Vec<ScheduleRow>) -> Result<Self> {
        let name = name.into();
        let fail = |row: usize, reason: String| Error::Schedule {
            source_name: name.clone(),
            row,
            reason,
        };
        if rows.len() < 2 {
            return Err(fail(rows.len(), "need at least two rows".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            let row = i + 1;
            if !(r.s.is_finite() && r.a.is_finite() && r.b.is_finite()) {
                return Err(fail(row, "non-finite value".into()));
            }
            if r.a < 0.0 || r.b < 0.0 {
                return Err(fail(row, format!("negative weight (a = {}, b = {})", r.a, r.b)));
            }
            if i > 0 && r.s <= rows[i - 1].s {
                return Err(fail(
                    row,
                    format!("s = {} does not increase past {}", r.s, rows[i - 1].s),
                ));
            }
        }
        if rows[0].s != 0.0 {
            return Err(fail(1, format!("first row must have s = 0, got {}", rows[0].s)));
        }
        let last = rows.len();
        if rows[last - 1].s != 1.0 {
            return Err(fail(last, format!("last row must have s = 1, got {}", rows[last - 1].s)));
        }
        let a_end = rows[last - 1].a;
        let b_start = rows[0].b;
        if a_end <= 0.0 {
            return Err(fail(last, "a(1) must be positive".into()));
        }
        if b_start <= 0.0 {
            return Err(fail(1, "b(0) must be positive".into()));
        }
        let rows: Vec<ScheduleRow> = rows
            .into_iter()
            .map(|r| ScheduleRow {
                s: r.s,
                a: r.a / a_end,
                b: r.b / b_start,
            })
            .collect();
        if rows[0].a > ENDPOINT_TOLERANCE {
            return Err(fail(1, format!("normalized a(0) = {} is not ~0", rows[0].a)));
        }
        if rows[last - 1].b > ENDPOINT_TOLERANCE {
            return Err(fail(last, format!("normalized b(1) = {} is not ~0", rows[last - 1].b)));
        }
        Ok(Schedule { name, rows })
    }

    pub fn from_csv_str(name: &str, text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|source| Error::Csv {
            context: name.to_string(),
            source,
        })?;
        if header.iter().collect::<Vec<_>>() != ["s", "a", "b"] {
            return Err(Error::Schedule {
                source_name: name.to_string(),
                row: 0,
                reason: format!("expected header \"s,a,b\", got {:?}", header.iter().collect::<Vec<_>>()),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.deserialize::<ScheduleRow>().enumerate() {
            let row = record.map_err(|e| Error::Schedule {
                source_name: name.to_string(),
                row: i + 1,
                reason: e.to_string(),
            })?;
            rows.push(row);
        }
        Schedule::from_rows(name, rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schedule::from_csv_str(&path.display().to_string(), &text)
    }

    /// `linear`, `steep`, or a CSV file path.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec {
            "linear" => Ok(linear_schedule()),
            "steep" => Ok(steep_surrogate_schedule()),
            path => Schedule::load(Path::new(path)),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,a,b\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.s, r.a, r.b));
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> &[ScheduleRow] {
        &self.rows
    }

    /// `(a(s), b(s))`, piecewise linear; `s` is clamped into `[0, 1]`.
    pub fn at(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, 1.0);
        let hi = self.rows.partition_point(|r| r.s < s).clamp(1, self.rows.len() - 1);
        let (r0, r1) = (&self.rows[hi - 1], &self.rows[hi]);
        if s == r1.s {
            return (r1.a, r1.b);
        }
        let w = (s - r0.s) / (r1.s - r0.s);
        (r0.a + w * (r1.a - r0.a), r0.b + w * (r1.b - r0.b))
    }
}

/// `a(s) = s`, `b(s) = 1 - s`, tabulated at `s = i/10`.
pub fn linear_schedule() -> Schedule {
    let rows = (0..=10)
        .map(|i| {
            let s = i as f64 / 10.0;
            ScheduleRow { s, a: s, b: 1.0 - s }
        })
        .collect();
    Schedule::from_rows("linear", rows).expect("linear schedule is valid")
}

/// Surrogate for hardware-like schedules: `a(s) = s`, `b(s) = (1 - s)^4`,
/// tabulated at `s = i/1000`. The driver is below 0.4% of its initial
/// weight for `s ≥ 0.75`. This is not vendor data.
pub fn steep_surrogate_schedule() -> Schedule {
    let rows = (0..=1000)
        .map(|i| {
            let s = i as f64 / 1000.0;
            ScheduleRow {
                s,
                a: s,
                b: (1.0 - s).powi(4),
            }
        })
        .collect();
    Schedule::from_rows("steep", rows).expect("steep schedule is valid")
}

pub fn load_schedule(path: &Path) -> Result<Schedule> {
    Schedule::load(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Forward,
    Reverse,
    /// Arbitrary `s(t)` in `[0, 1]`; used for mirrored and test paths.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealPath {
    kind: PathKind,
    waypoints: Vec<Waypoint>,
}

impl AnnealPath {
    pub fn new(kind: PathKind, waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::param("waypoints", "need at least two"));
        }
        if waypoints[0].t != 0.0 {
            return Err(Error::param("waypoints", "first waypoint must be at t = 0"));
        }
        for w in waypoints.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::param("waypoints", format!("t does not increase at {}", w[1].t)));
            }
        }
        if waypoints.iter().any(|w| !(0.0..=1.0).contains(&w.s)) {
            return Err(Error::param("waypoints", "s outside [0, 1]"));
        }
        let first = waypoints[0].s;
        let last = waypoints[waypoints.len() - 1].s;
        match kind {
            PathKind::Forward => {
                if first != 0.0 || last != 1.0 || waypoints.windows(2).any(|w| w[1].s < w[0].s) {
                    return Err(Error::param("waypoints", "forward path must rise monotonically from 0 to 1"));
                }
            }
            PathKind::Reverse => {
                if first != 1.0 || last != 1.0 {
                    return Err(Error::param("waypoints", "reverse path must start and end at s = 1"));
                }
                let turn = waypoints
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.s.total_cmp(&b.1.s))
                    .map(|(i, _)| i)
                    .unwrap();
                let descends = waypoints[..=turn].windows(2).all(|w| w[1].s <= w[0].s);
                let ascends = waypoints[turn..].windows(2).all(|w| w[1].s >= w[0].s);
                if !(descends && ascends) {
                    return Err(Error::param("waypoints", "reverse path must descend then ascend"));
                }
            }
            PathKind::Custom => {}
        }
        Ok(AnnealPath { kind, waypoints })
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn total_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].t
    }

    /// Minimum `s` on the path.
    pub fn reverse_distance(&self) -> f64 {
        self.waypoints.iter().map(|w| w.s).fold(f64::INFINITY, f64::min)
    }

    pub fn s_at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.total_time());
        let hi = self
            .waypoints
            .partition_point(|w| w.t < t)
            .clamp(1, self.waypoints.len() - 1);
        let (w0, w1) = (&self.waypoints[hi - 1], &self.waypoints[hi]);
        w0.s + (t - w0.t) / (w1.t - w0.t) * (w1.s - w0.s)
    }

    pub fn check_hardware_compat(&self) -> Result<()> {
        if self.waypoints.len() > MAX_HARDWARE_WAYPOINTS {
            return Err(Error::param(
                "waypoints",
                format!("{} waypoints exceed the hardware limit of {MAX_HARDWARE_WAYPOINTS}", self.waypoints.len()),
            ));
        }
        Ok(())
    }

    /// Time-mirrored path `s'(t) = s(T - t)`.
    pub fn mirrored(&self) -> AnnealPath {
        let total = self.total_time();
        let waypoints = self
            .waypoints
            .iter()
            .rev()
            .map(|w| Waypoint { t: total - w.t, s: w.s })
            .collect();
        AnnealPath {
            kind: PathKind::Custom,
            waypoints,
        }
    }
}

pub fn make_forward_path(total_time: f64) -> Result<AnnealPath> {
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(Error::param("total_time", format!("must be positive, got {total_time}")));
    }
    AnnealPath::new(
        PathKind::Forward,
        vec![Waypoint { t: 0.0, s: 0.0 }, Waypoint { t: total_time, s: 1.0 }],
    )
}

/// Twelve-point reverse path: five equal `s` steps down to `s_prime`, one
/// pause interval, and the mirrored ascent. The first interval lasts
/// `210/2200` of the total and the remaining ten `199/2200` each.
pub fn make_reverse_path(s_prime: f64, total_time: f64) -> Result<AnnealPath> {
    if !(s_prime > 0.0 && s_prime < 1.0) {
        return Err(Error::param("s_prime", format!("reverse distance {s_prime} not in (0, 1)")));
    }
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(Error::param("total_time", format!("must be positive, got {total_time}")));
    }
    let mut descent: Vec<f64> = (0..5).map(|i| 1.0 - i as f64 * (1.0 - s_prime) / 5.0).collect();
    descent.push(s_prime);
    let s_values: Vec<f64> = descent.iter().chain(descent.iter().rev()).copied().collect();
    let times = (0..12).map(|i| match i {
        0 => 0.0,
        11 => total_time,
        i => total_time * (210.0 + (i - 1) as f64 * 199.0) / 2200.0,
    });
    let waypoints = times.zip(s_values).map(|(t, s)| Waypoint { t, s }).collect();
    AnnealPath::new(PathKind::Reverse, waypoints)
}

/// Reverse distances `0.30, 0.37, ..., 0.93`.
pub fn reverse_distance_grid() -> Vec<f64> {
    (0..10).map(|i| (30 + 7 * i) as f64 / 100.0).collect()
}
