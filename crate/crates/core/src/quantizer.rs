//! Discrete unit extraction: k-means codebook, nearest-centroid assignment,
//! run-length deduplication and frame-space speaker normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodebookRepr", into = "CodebookRepr")]
pub struct Codebook {
    centroids: Matrix,
    /// Sum of squared distances after each Lloyd update.
    pub fit_objective_trace: Vec<f64>,
    /// Whether fitting stopped at an assignment fixpoint rather than `max_iters`.
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct CodebookRepr {
    k: usize,
    d: usize,
    centroids: Vec<f64>,
    #[serde(default)]
    fit_objective_trace: Vec<f64>,
    #[serde(default)]
    converged: bool,
}

impl TryFrom<CodebookRepr> for Codebook {
    type Error = Error;

    fn try_from(r: CodebookRepr) -> Result<Self> {
        let centroids = Matrix::from_vec(r.k, r.d, r.centroids)?;
        Codebook::new(centroids).map(|mut c| {
            c.fit_objective_trace = r.fit_objective_trace;
            c.converged = r.converged;
            c
        })
    }
}

impl From<Codebook> for CodebookRepr {
    fn from(c: Codebook) -> Self {
        CodebookRepr {
            k: c.k(),
            d: c.dim(),
            centroids: c.centroids.into_vec(),
            fit_objective_trace: c.fit_objective_trace,
            converged: c.converged,
        }
    }
}

impl Codebook {
    pub fn new(centroids: Matrix) -> Result<Self> {
        if centroids.rows() == 0 {
            return Err(Error::Empty("codebook needs at least one centroid".into()));
        }
        if !centroids.all_finite() {
            return Err(Error::Numeric("non-finite centroid".into()));
        }
        Ok(Self {
            centroids,
            fit_objective_trace: Vec::new(),
            converged: false,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        self.centroids.row(k)
    }

    /// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
    pub fn assign(&self, frame: &[f64]) -> Result<u32> {
        if frame.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: frame.len(),
            });
        }
        Ok(nearest(&self.centroids, frame).0 as u32)
    }

    pub fn assign_all(&self, frames: &Matrix) -> Result<Vec<u32>> {
        if frames.cols() != self.dim() && !frames.is_empty() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: frames.cols(),
            });
        }
        Ok(frames
            .iter_rows()
            .map(|f| nearest(&self.centroids, f).0 as u32)
            .collect())
    }
}

fn nearest(centroids: &Matrix, frame: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter_rows().enumerate() {
        let d = squared_distance(c, frame);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Iterates until the assignment no longer changes or `max_iters` updates have
/// run. A cluster that loses all its points is re-seeded at the frame farthest
/// from its currently assigned centroid.
pub fn fit_kmeans(frames: &Matrix, k: usize, max_iters: usize, seed: u64) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::Fit("k must be >= 1".into()));
    }
    if frames.rows() < k {
        return Err(Error::Fit(format!(
            "{} frames cannot fit {k} clusters",
            frames.rows()
        )));
    }
    if !frames.all_finite() {
        return Err(Error::Numeric("non-finite frame".into()));
    }
    let n = frames.rows();
    let d = frames.cols();
    let mut rng = rng::stream(seed, "kmeans");

    // k-means++ seeding
    let mut centroids = Matrix::zeros(0, d);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.push_row(frames.row(first))?;
    let mut closest: Vec<f64> = frames
        .iter_rows()
        .map(|f| squared_distance(f, frames.row(first)))
        .collect();
    while centroids.rows() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| closest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            chosen.iter().position(|c| !c).unwrap()
        };
        chosen[pick] = true;
        centroids.push_row(frames.row(pick))?;
        for (i, f) in frames.iter_rows().enumerate() {
            closest[i] = closest[i].min(squared_distance(f, frames.row(pick)));
        }
    }

    let mut assignments: Vec<usize> = frames.iter_rows().map(|f| nearest(&centroids, f).0).collect();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        update_centroids(frames, &assignments, &mut centroids);
        trace.push(objective(frames, &assignments, &centroids));
        let next: Vec<usize> = frames.iter_rows().map(|f| nearest(&centroids, f).0).collect();
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }

    let mut cb = Codebook::new(centroids)?;
    cb.fit_objective_trace = trace;
    cb.converged = converged;
    Ok(cb)
}

fn update_centroids(frames: &Matrix, assignments: &[usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let d = frames.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (f, &a) in frames.iter_rows().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(f) {
            *s += v;
        }
    }
    let mut taken = vec![false; frames.rows()];
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (o, s) in centroids.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *o = s * inv;
            }
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            // farthest frame from its own centroid, not already used for a re-seed
            let mut best = None;
            let mut best_d = -1.0;
            for (i, f) in frames.iter_rows().enumerate() {
                if taken[i] {
                    continue;
                }
                let dist = squared_distance(f, centroids.row(assignments[i]));
                if dist > best_d {
                    best_d = dist;
                    best = Some(i);
                }
            }
            if let Some(i) = best {
                taken[i] = true;
                let row = frames.row(i).to_vec();
                centroids.row_mut(c).copy_from_slice(&row);
            }
        }
    }
}

fn objective(frames: &Matrix, assignments: &[usize], centroids: &Matrix) -> f64 {
    frames
        .iter_rows()
        .zip(assignments)
        .map(|(f, &a)| squared_distance(f, centroids.row(a)))
        .sum()
}

/// Deduplicated cluster indices for one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnitSequence {
    pub units: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<usize>,
    #[serde(default)]
    pub is_normalized: bool,
}

impl UnitSequence {
    /// Collapses every maximal run of equal indices to a single entry.
    pub fn dedup(raw: &[u32]) -> Self {
        let mut units = raw.to_vec();
        units.dedup();
        Self {
            units,
            speaker_id: None,
            is_normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn has_adjacent_duplicates(&self) -> bool {
        self.units.windows(2).any(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub units: UnitSequence,
    /// Per-frame assignments before deduplication.
    pub assignments: Vec<u32>,
}

pub fn extract_units(codebook: &Codebook, frames: &Matrix) -> Result<Extraction> {
    if frames.is_empty() {
        return Err(Error::Empty("cannot extract units from zero frames".into()));
    }
    let assignments = codebook.assign_all(frames)?;
    Ok(Extraction {
        units: UnitSequence::dedup(&assignments),
        assignments,
    })
}

/// Per-speaker mean offsets relative to the global frame mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub global_mean: Vec<f64>,
    pub offsets: Vec<Option<Vec<f64>>>,
}

impl SpeakerStats {
    pub fn estimate<'a>(
        frames_by_speaker: impl IntoIterator<Item = (usize, &'a Matrix)>,
    ) -> Result<Self> {
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = Vec::new();
        let mut global: Option<(Vec<f64>, usize)> = None;
        for (spk, frames) in frames_by_speaker {
            if frames.is_empty() {
                continue;
            }
            let d = frames.cols();
            if sums.len() <= spk {
                sums.resize(spk + 1, None);
            }
            let (g, gn) = global.get_or_insert_with(|| (vec![0.0; d], 0));
            if g.len() != d {
                return Err(Error::Shape {
                    expected: g.len(),
                    got: d,
                });
            }
            let (s, sn) = sums[spk].get_or_insert_with(|| (vec![0.0; d], 0));
            for f in frames.iter_rows() {
                for j in 0..d {
                    s[j] += f[j];
                    g[j] += f[j];
                }
            }
            *sn += frames.rows();
            *gn += frames.rows();
        }
        let (g, gn) = global.ok_or_else(|| Error::Empty("no frames for speaker statistics".into()))?;
        let global_mean: Vec<f64> = g.iter().map(|v| v / gn as f64).collect();
        let offsets = sums
            .into_iter()
            .map(|s| {
                s.map(|(s, n)| {
                    s.iter()
                        .zip(&global_mean)
                        .map(|(v, m)| v / n as f64 - m)
                        .collect()
                })
            })
            .collect();
        Ok(Self {
            global_mean,
            offsets,
        })
    }

    pub fn offset(&self, speaker_id: usize) -> Result<&[f64]> {
        self.offsets
            .get(speaker_id)
            .and_then(|o| o.as_deref())
            .ok_or(Error::Speaker(speaker_id))
    }
}

/// Removes the speaker's estimated mean offset from every frame.
pub fn normalize_speaker(frames: &Matrix, speaker_id: usize, stats: &SpeakerStats) -> Result<Matrix> {
    let offset = stats.offset(speaker_id)?;
    if frames.cols() != offset.len() && !frames.is_empty() {
        return Err(Error::Shape {
            expected: offset.len(),
            got: frames.cols(),
        });
    }
    let mut out = frames.clone();
    for i in 0..out.rows() {
        for (v, o) in out.row_mut(i).iter_mut().zip(offset) {
            *v -= o;
        }
    }
    Ok(out)
}

/// Norm units: speaker-normalized frames pushed through the extractor.
pub fn extract_normalized_units(
    codebook: &Codebook,
    frames: &Matrix,
    speaker_id: usize,
    stats: &SpeakerStats,
) -> Result<Extraction> {
    let normalized = normalize_speaker(frames, speaker_id, stats)?;
    let mut ex = extract_units(codebook, &normalized)?;
    ex.units.is_normalized = true;
    ex.units.speaker_id = Some(speaker_id);
    Ok(ex)
}

/// Centroid lookup per pre-dedup assignment.
pub fn resynthesize(codebook: &Codebook, assignments: &[u32]) -> Result<Matrix> {
    let mut out = Matrix::zeros(0, codebook.dim());
    for &a in assignments {
        let a = a as usize;
        if a >= codebook.k() {
            return Err(Error::Index {
                index: a,
                bound: codebook.k(),
            });
        }
        out.push_row(codebook.centroid(a))?;
    }
    Ok(out)
}
