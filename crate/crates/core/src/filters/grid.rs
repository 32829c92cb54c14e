//! Fixed support of the conditional filter and its per-decision transition
//! tensor, estimated once by Monte-Carlo and cached on disk.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FilterError;
use crate::pdmp::{Decision, Mode, Model, PatientState};
use crate::rng;

/// Identifier written at the top of every cache file.
pub const CACHE_FORMAT: &str = "followup-transition-cache/1";

/// How a simulated state is mapped back onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// All mass on the nearest grid state of the same mode (ties go up).
    Nearest,
    /// Mass split linearly between the two bracketing grid states.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Remission states, spread uniformly in `u` over `[0, H]`.
    pub remission: usize,
    /// Disease-1 states, log-uniform in the marker over `[ζ0, D]`.
    pub disease1: usize,
    /// Disease-2 states, log-uniform in the marker over `[ζ0, D]`.
    pub disease2: usize,
    /// Monte-Carlo segments per (grid state, decision).
    pub samples_per_row: usize,
    pub seed: u64,
    pub projection: Projection,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            remission: 81,
            disease1: 31,
            disease2: 71,
            samples_per_row: 10_000,
            seed: 0x5eed,
            projection: Projection::Split,
        }
    }
}

impl GridSpec {
    /// Same geometry with every count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            remission: (self.remission - 1) * factor + 1,
            disease1: (self.disease1 - 1) * factor + 1,
            disease2: (self.disease2 - 1) * factor + 1,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.remission + self.disease1 + self.disease2 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mode: Mode,
    pub marker: f64,
    pub since_jump: f64,
}

/// Support of the conditional filter: remission states first, then disease 1,
/// disease 2, and the death atom last.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<GridPoint>,
    counts: [usize; 3],
    nominal: f64,
    death: f64,
    horizon: f64,
}

impl Grid {
    pub fn new(model: &Model, spec: &GridSpec) -> Result<Self, FilterError> {
        let counts = [spec.remission, spec.disease1, spec.disease2];
        if counts.iter().any(|&c| c < 2) {
            return Err(FilterError::BadGrid(counts));
        }
        let nominal = model.nominal_level();
        let death = model.death_level();
        let horizon = model.horizon();
        let mut points = Vec::with_capacity(spec.len());
        for k in 0..spec.remission {
            let u = horizon * k as f64 / (spec.remission - 1) as f64;
            points.push(GridPoint {
                mode: Mode::Remission,
                marker: nominal,
                since_jump: u,
            });
        }
        for (mode, n) in [
            (Mode::Disease1, spec.disease1),
            (Mode::Disease2, spec.disease2),
        ] {
            for k in 0..n {
                let marker = nominal * (death / nominal).powf(k as f64 / (n - 1) as f64);
                points.push(GridPoint {
                    mode,
                    marker: marker.clamp(nominal, death),
                    since_jump: 0.0,
                });
            }
        }
        points.push(GridPoint {
            mode: Mode::Death,
            marker: death,
            since_jump: 0.0,
        });
        Ok(Self {
            points,
            counts,
            nominal,
            death,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn death_index(&self) -> usize {
        self.points.len() - 1
    }

    /// Patient state at grid point `i` with the given absolute clock.
    pub fn state(&self, i: usize, clock: f64) -> PatientState {
        let p = self.points[i];
        PatientState::new(p.mode, p.marker, p.since_jump, clock)
    }

    fn offset(&self, mode: Mode) -> usize {
        match mode {
            Mode::Remission => 0,
            Mode::Disease1 => self.counts[0],
            Mode::Disease2 => self.counts[0] + self.counts[1],
            Mode::Death => self.death_index(),
        }
    }

    /// Grid states (with weights summing to one) representing `state`. Mode is
    /// never changed by the projection.
    pub fn project(&self, state: &PatientState, projection: Projection) -> [(usize, f64); 2] {
        let (n, pos) = match state.mode {
            Mode::Death => return [(self.death_index(), 1.0), (self.death_index(), 0.0)],
            Mode::Remission => {
                let n = self.counts[0];
                (n, state.since_jump / self.horizon * (n - 1) as f64)
            }
            Mode::Disease1 | Mode::Disease2 => {
                let n = self.counts[state.mode.index()];
                let rel = (state.marker / self.nominal).ln() / (self.death / self.nominal).ln();
                (n, rel * (n - 1) as f64)
            }
        };
        let base = self.offset(state.mode);
        let pos = pos.clamp(0.0, (n - 1) as f64);
        match projection {
            Projection::Nearest => {
                let k = (pos + 0.5).floor().min((n - 1) as f64) as usize;
                [(base + k, 1.0), (base + k, 0.0)]
            }
            Projection::Split => {
                let lo = pos.floor().min((n - 2) as f64) as usize;
                let frac = pos - lo as f64;
                [(base + lo, 1.0 - frac), (base + lo + 1, frac)]
            }
        }
    }
}

/// `P(grid j at next visit | grid i, decision d)` for all nine decisions.
#[derive(Debug, Clone)]
pub struct TransitionTensor {
    grid: Grid,
    spec: GridSpec,
    params_hash: String,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    params_hash: String,
    spec: GridSpec,
    /// `rows[d][i]` lists the nonzero `(j, p)` entries.
    rows: Vec<Vec<Vec<(u32, f64)>>>,
}

/// Hash of everything that determines the tensor.
pub fn tensor_key(model: &Model, spec: &GridSpec) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model.params()).expect("params serialize"));
    h.update(serde_json::to_vec(spec).expect("spec serializes"));
    hex::encode(h.finalize())
}

impl TransitionTensor {
    /// Monte-Carlo estimate: from every grid state and decision, simulate
    /// `samples_per_row` segments and project the end states on the grid.
    pub fn build(model: &Model, spec: &GridSpec) -> Result<Self, FilterError> {
        let grid = Grid::new(model, spec)?;
        let n = grid.len();
        let samples = spec.samples_per_row.max(1);
        let rows: Vec<(usize, usize, Vec<f64>)> = (0..Decision::COUNT * n)
            .into_par_iter()
            .map(|idx| {
                let (d, i) = (idx / n, idx % n);
                let decision = Decision::ALL[d];
                let mut row = vec![0.0; n];
                let start = grid.state(i, 0.0);
                if start.is_dead() {
                    row[grid.death_index()] = 1.0;
                    return (d, i, row);
                }
                let mut rng = rng::stream(spec.seed, idx as u64);
                let w = 1.0 / samples as f64;
                for _ in 0..samples {
                    let end = model.simulate_segment(&start, decision, &mut rng);
                    for (j, p) in grid.project(&end, spec.projection) {
                        row[j] += p * w;
                    }
                }
                (d, i, row)
            })
            .collect();
        let mut data = vec![0.0; Decision::COUNT * n * n];
        for (d, i, row) in rows {
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(FilterError::EmptyRow {
                    decision: d,
                    row: i,
                });
            }
            let dst = &mut data[(d * n + i) * n..(d * n + i + 1) * n];
            for (x, v) in dst.iter_mut().zip(row) {
                *x = v / total;
            }
        }
        Ok(Self {
            grid,
            spec: spec.clone(),
            params_hash: tensor_key(model, spec),
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn params_hash(&self) -> &str {
        &self.params_hash
    }

    pub fn row(&self, decision: Decision, i: usize) -> &[f64] {
        let n = self.grid.len();
        let d = decision.index();
        &self.data[(d * n + i) * n..(d * n + i + 1) * n]
    }

    /// Default cache file name inside `dir`.
    pub fn cache_path(dir: &Path, model: &Model, spec: &GridSpec) -> PathBuf {
        dir.join(format!(
            "transitions-{}.json",
            &tensor_key(model, spec)[..16]
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), FilterError> {
        let n = self.grid.len();
        let rows = (0..Decision::COUNT)
            .map(|d| {
                (0..n)
                    .map(|i| {
                        self.data[(d * n + i) * n..(d * n + i + 1) * n]
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(j, &p)| (j as u32, p))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let file = CacheFile {
            format: CACHE_FORMAT.to_string(),
            params_hash: self.params_hash.clone(),
            spec: self.spec.clone(),
            rows,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("json.tmp");
        serde_json::to_writer(BufWriter::new(fs::File::create(&tmp)?), &file)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Loads a cache file, checking that it was built for this model and grid.
    pub fn load(path: &Path, model: &Model, spec: &GridSpec) -> Result<Self, FilterError> {
        let file: CacheFile = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
        if file.format != CACHE_FORMAT {
            return Err(FilterError::CacheMismatch(format!(
                "unknown format {}",
                file.format
            )));
        }
        let key = tensor_key(model, spec);
        if file.params_hash != key || &file.spec != spec {
            return Err(FilterError::CacheMismatch("parameters hash differs".into()));
        }
        let grid = Grid::new(model, spec)?;
        let n = grid.len();
        if file.rows.len() != Decision::COUNT || file.rows.iter().any(|r| r.len() != n) {
            return Err(FilterError::CacheMismatch("tensor shape differs".into()));
        }
        let mut data = vec![0.0; Decision::COUNT * n * n];
        for (d, rows) in file.rows.iter().enumerate() {
            for (i, row) in rows.iter().enumerate() {
                for &(j, p) in row {
                    let j = j as usize;
                    if j >= n {
                        return Err(FilterError::CacheMismatch(format!(
                            "column {j} out of range"
                        )));
                    }
                    data[(d * n + i) * n + j] = p;
                }
            }
        }
        Ok(Self {
            grid,
            spec: spec.clone(),
            params_hash: key,
            data,
        })
    }

    /// Loads the cached tensor from `dir` or builds and stores it.
    pub fn load_or_build(dir: &Path, model: &Model, spec: &GridSpec) -> Result<Self, FilterError> {
        let path = Self::cache_path(dir, model, spec);
        match Self::load(&path, model, spec) {
            Ok(t) => Ok(t),
            Err(err) => {
                if path.exists() {
                    tracing::warn!(path = %path.display(), %err, "rebuilding transition cache");
                }
                let t = Self::build(model, spec)?;
                t.save(&path)?;
                Ok(t)
            }
        }
    }
}
