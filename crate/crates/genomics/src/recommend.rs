//! Representative-subset recommendation of untested crosses.
//!
//! Feasible crosses are chosen so that every candidate has a close selected
//! representative (facility location) while few are selected:
//! `min_U sum_j min_{i in U} D_ij + gamma |U|`.

use std::collections::HashSet;

use dualproj_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{genomic_distance, synthesize_hybrid, ParentLine};
use crate::predictor::TraitPredictor;

/// Trait combination scored for every candidate: `sum_t weight_t * z_t`
/// where `z_t` standardizes the predicted trait by `(mean, scale)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSpec {
    pub terms: Vec<ScoreTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTerm {
    #[serde(rename = "trait")]
    pub trait_name: String,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ScoreSpec {
    /// Equal-weight sum of the named traits standardized by `stats`
    /// (`(mean, scale)` per trait name).
    pub fn normalized_sum(names: &[String], stats: &[(f64, f64)]) -> Self {
        Self {
            terms: names
                .iter()
                .zip(stats)
                .map(|(n, &(mean, scale))| ScoreTerm {
                    trait_name: n.clone(),
                    weight: 1.0,
                    mean,
                    scale: if scale > 0.0 { scale } else { 1.0 },
                })
                .collect(),
        }
    }

    fn resolve(&self, trait_names: &[String]) -> Result<Vec<(usize, f64, f64, f64)>> {
        self.terms
            .iter()
            .map(|t| {
                let j = trait_names
                    .iter()
                    .position(|n| *n == t.trait_name)
                    .ok_or_else(|| Error::Argument(format!("score uses unknown trait {:?}", t.trait_name)))?;
                Ok((j, t.weight, t.mean, t.scale))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub iters: usize,
    pub rho: f64,
    /// Rows whose largest assignment exceeds this are selected, unless a
    /// prefix of the rows ranked by largest assignment is cheaper.
    pub threshold: f64,
    pub tol: f64,
    /// Improve the rounded set by single add/drop/swap moves.
    pub polish: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            iters: 500,
            rho: 1.0,
            threshold: 0.5,
            tol: 1e-6,
            polish: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendationConfig {
    /// Approximate number of hybrids to recommend; sets the default gamma.
    #[serde(rename = "K")]
    pub k: usize,
    pub gamma: Option<f64>,
    /// Parent-distance threshold; defaults to the mean parent distance of
    /// the cultivated hybrids.
    pub epsilon: Option<f64>,
    pub beta: f64,
    pub score: ScoreSpec,
    /// Cultivated crosses as `(paternal id, maternal id)`.
    pub cultivated: Vec<(String, String)>,
    /// Most feasible candidates kept (highest scores first).
    pub max_pool: usize,
    pub admm: AdmmConfig,
}

impl Default for RecommendationConfig {
    fn default() -> Self {
        Self {
            k: 10,
            gamma: None,
            epsilon: None,
            beta: f64::NEG_INFINITY,
            score: ScoreSpec { terms: Vec::new() },
            cultivated: Vec::new(),
            max_pool: 50_000,
            admm: AdmmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub paternal: String,
    pub maternal: String,
    pub genotype: Vec<u8>,
    pub predicted_traits: Vec<f64>,
    pub score: f64,
    pub parent_distance: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub candidates: Vec<Candidate>,
    /// Pairwise genomic distances among candidates.
    pub distances: Matrix,
    pub epsilon: f64,
    pub beta: f64,
    /// Feasible crosses dropped by the pool cap.
    pub truncated: usize,
}

impl CandidatePool {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    /// Builds a pool straight from a distance matrix (no genotypes).
    pub fn from_distances(distances: Matrix) -> Result<Self> {
        check_distances(&distances)?;
        let candidates = (0..distances.rows())
            .map(|i| Candidate {
                paternal: format!("p{i}"),
                maternal: format!("m{i}"),
                genotype: Vec::new(),
                predicted_traits: Vec::new(),
                score: 0.0,
                parent_distance: 0,
            })
            .collect();
        Ok(Self {
            candidates,
            distances,
            epsilon: 0.0,
            beta: f64::NEG_INFINITY,
            truncated: 0,
        })
    }
}

fn check_distances(d: &Matrix) -> Result<()> {
    let n = d.rows();
    if d.cols() != n {
        return Err(Error::Data("distance matrix must be square".into()));
    }
    for i in 0..n {
        if d[(i, i)] != 0.0 {
            return Err(Error::Data(format!("distance diagonal {i} is not zero")));
        }
        for j in 0..i {
            if d[(i, j)] != d[(j, i)] || d[(i, j)] < 0.0 || !d[(i, j)].is_finite() {
                return Err(Error::Data(format!("distances ({i}, {j}) are not symmetric and non-negative")));
            }
        }
    }
    Ok(())
}

/// Mean parent distance of the cultivated crosses, 0 when there are none.
pub fn default_epsilon(paternal: &[ParentLine], maternal: &[ParentLine], cultivated: &[(String, String)]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, m) in cultivated {
        let (Some(pl), Some(ml)) = (
            paternal.iter().find(|l| l.id == *p),
            maternal.iter().find(|l| l.id == *m),
        ) else {
            continue;
        };
        total += genomic_distance(&pl.calls, &ml.calls)? as f64;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Every cross that is not cultivated, whose parents differ by more than
/// `epsilon` genes and whose predicted score exceeds `beta`. Crosses are
/// filtered one at a time, so only feasible ones are held in memory.
pub fn build_candidates(
    paternal: &[ParentLine],
    maternal: &[ParentLine],
    config: &RecommendationConfig,
    predictor: &TraitPredictor,
) -> Result<CandidatePool> {
    let epsilon = match config.epsilon {
        Some(e) if e < 0.0 => return Err(Error::Argument(format!("epsilon {e} is negative"))),
        Some(e) => e,
        None => default_epsilon(paternal, maternal, &config.cultivated)?,
    };
    let terms = config.score.resolve(&predictor.trait_names)?;
    let cultivated: HashSet<(&str, &str)> = config
        .cultivated
        .iter()
        .map(|(p, m)| (p.as_str(), m.as_str()))
        .collect();
    let mut candidates = Vec::new();
    for p in paternal {
        for m in maternal {
            if cultivated.contains(&(p.id.as_str(), m.id.as_str())) {
                continue;
            }
            let parent_distance = genomic_distance(&p.calls, &m.calls)?;
            if parent_distance as f64 <= epsilon {
                continue;
            }
            let genotype = synthesize_hybrid(p, m)?;
            let predicted_traits = predictor.predict(&genotype)?;
            let score: f64 = terms
                .iter()
                .map(|&(j, w, mean, scale)| w * (predicted_traits[j] - mean) / scale)
                .sum();
            if score <= config.beta {
                continue;
            }
            candidates.push(Candidate {
                paternal: p.id.clone(),
                maternal: m.id.clone(),
                genotype,
                predicted_traits,
                score,
                parent_distance,
            });
        }
    }
    let mut truncated = 0;
    if candidates.len() > config.max_pool {
        truncated = candidates.len() - config.max_pool;
        // stable: equal scores keep enumeration order
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
        candidates.truncate(config.max_pool);
    }
    let n = candidates.len();
    let mut distances = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let d = genomic_distance(&candidates[i].genotype, &candidates[j].genotype)? as f64;
            distances.row_mut(i)[j] = d;
            distances.row_mut(j)[i] = d;
        }
    }
    Ok(CandidatePool {
        candidates,
        distances,
        epsilon,
        beta: config.beta,
        truncated,
    })
}

/// `max_ij D_ij / K`.
pub fn derive_gamma(distances: &Matrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Argument("K must be at least 1".into()));
    }
    let max = distances.as_slice().iter().copied().fold(0.0, f64::max);
    Ok(max / k as f64)
}

/// `sum_j min_{i in U} D_ij + gamma |U|`; infinite for an empty set.
pub fn facility_objective(distances: &Matrix, selected: &[usize], gamma: f64) -> f64 {
    if selected.is_empty() {
        return f64::INFINITY;
    }
    let n = distances.rows();
    let cover: f64 = (0..n)
        .map(|j| selected.iter().map(|&i| distances[(i, j)]).fold(f64::INFINITY, f64::min))
        .sum();
    cover + gamma * selected.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Sorted candidate indices.
    pub selected: Vec<usize>,
    pub objective: f64,
    pub gamma: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Euclidean projection of `v` onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Proximal map of `lambda * |.|_inf`: `v` minus its projection onto the
/// l1 ball of radius `lambda`.
fn prox_linf(v: &mut [f64], lambda: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= lambda {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in a.iter().enumerate() {
        cum += x;
        let t = (cum - lambda) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    // projection onto the ball soft-thresholds by theta; v minus it clips at theta
    v.iter_mut().for_each(|x| *x = x.signum() * x.abs().min(theta));
}

/// Rows whose largest assignment exceeds `threshold` (the largest row when
/// none does), and, if cheaper, the best prefix of rows ordered by their
/// largest assignment.
fn round_rows(z: &Matrix, d: &Matrix, gamma: f64, threshold: f64) -> Vec<usize> {
    let norms: Vec<f64> = z.row_iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    let mut order: Vec<usize> = (0..z.rows()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let above = order.iter().take_while(|&&i| norms[i] > threshold).count().max(1);
    let mut best = (facility_objective(d, &order[..above], gamma), above);
    let n = d.rows();
    let mut cover = vec![f64::INFINITY; n];
    for (m, &i) in order.iter().enumerate() {
        if norms[i] <= 0.0 && m > 0 {
            break;
        }
        for (j, c) in cover.iter_mut().enumerate() {
            *c = c.min(d[(i, j)]);
        }
        let obj = cover.iter().sum::<f64>() + gamma * (m + 1) as f64;
        if obj < best.0 {
            best = (obj, m + 1);
        }
    }
    let mut out = order[..best.1].to_vec();
    out.sort_unstable();
    out
}

/// Single add, drop and swap moves until none lowers the objective.
fn polish(distances: &Matrix, mut selected: Vec<usize>, gamma: f64) -> Vec<usize> {
    let n = distances.rows();
    let mut best = facility_objective(distances, &selected, gamma);
    loop {
        let mut improved = None;
        let inside: HashSet<usize> = selected.iter().copied().collect();
        let mut consider = |cand: Vec<usize>, best: &mut f64| {
            let obj = facility_objective(distances, &cand, gamma);
            if obj < *best - 1e-12 {
                *best = obj;
                improved = Some(cand);
            }
        };
        for i in (0..n).filter(|i| !inside.contains(i)) {
            let mut c = selected.clone();
            c.push(i);
            consider(c, &mut best);
        }
        for (pos, _) in selected.iter().enumerate() {
            if selected.len() > 1 {
                let mut c = selected.clone();
                c.remove(pos);
                consider(c, &mut best);
            }
            for i in (0..n).filter(|i| !inside.contains(i)) {
                let mut c = selected.clone();
                c[pos] = i;
                consider(c, &mut best);
            }
        }
        match improved {
            Some(c) => selected = c,
            None => break,
        }
    }
    selected.sort_unstable();
    selected
}

/// Convex relaxation solved by ADMM: assignment matrix `Z` (rows are
/// representatives, columns are candidates, each column on the simplex)
/// minimizing `<D, Z> + gamma * sum_i |Z_i|_inf`. Rows whose largest entry
/// exceeds the threshold are selected; the best rounded iterate is kept.
pub fn select_admm(pool: &CandidatePool, gamma: f64, config: &AdmmConfig) -> Result<Selection> {
    let d = &pool.distances;
    let n = d.rows();
    if n == 0 {
        return Err(Error::Argument("empty candidate pool".into()));
    }
    if !(config.rho > 0.0) {
        return Err(Error::Argument(format!("rho {} must be positive", config.rho)));
    }
    let rho = config.rho;
    let mut z = Matrix::filled(n, n, 1.0 / n as f64);
    let mut c = z.clone();
    let mut dual = Matrix::zeros(n, n);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut col = vec![0.0; n];
    for it in 0..config.iters {
        iterations = it + 1;
        // Z-step: column-wise simplex projection of C - (D + dual) / rho
        for j in 0..n {
            for i in 0..n {
                col[i] = c[(i, j)] - (d[(i, j)] + dual[(i, j)]) / rho;
            }
            project_simplex(&mut col);
            for i in 0..n {
                z.row_mut(i)[j] = col[i];
            }
        }
        // C-step: row-wise prox of the l-infinity norm
        let c_prev = c.clone();
        for i in 0..n {
            let row = c.row_mut(i);
            for j in 0..n {
                row[j] = z[(i, j)] + dual[(i, j)] / rho;
            }
            prox_linf(row, gamma / rho);
        }
        let mut primal: f64 = 0.0;
        let mut change: f64 = 0.0;
        for ((dv, (&zv, &cv)), &cp) in dual
            .as_mut_slice()
            .iter_mut()
            .zip(z.as_slice().iter().zip(c.as_slice()))
            .zip(c_prev.as_slice())
        {
            *dv += rho * (zv - cv);
            primal = primal.max((zv - cv).abs());
            change = change.max((cv - cp).abs());
        }
        let selected = round_rows(&z, d, gamma, config.threshold);
        let obj = facility_objective(d, &selected, gamma);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, selected));
        }
        if primal < config.tol && rho * change < config.tol {
            converged = true;
            break;
        }
    }
    let (_, mut selected) = best.expect("at least one iteration");
    if config.polish {
        selected = polish(d, selected, gamma);
    }
    selected.sort_unstable();
    if !converged {
        log::warn!("ADMM stopped after {iterations} iterations without converging");
    }
    Ok(Selection {
        objective: facility_objective(d, &selected, gamma),
        selected,
        gamma,
        converged,
        iterations,
    })
}

/// Greedy facility location: repeatedly add the candidate with the largest
/// objective decrease (lowest index on ties) until none decreases it.
pub fn select_greedy(pool: &CandidatePool, gamma: f64) -> Result<Selection> {
    let d = &pool.distances;
    let n = d.rows();
    if n == 0 {
        return Err(Error::Argument("empty candidate pool".into()));
    }
    let mut selected: Vec<usize> = Vec::new();
    let mut cover = vec![f64::INFINITY; n];
    let mut current = f64::INFINITY;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..n).filter(|i| !selected.contains(i)) {
            let obj: f64 = (0..n).map(|j| cover[j].min(d[(i, j)])).sum::<f64>() + gamma * (selected.len() + 1) as f64;
            if obj < current && best.is_none_or(|(b, _)| obj < b) {
                best = Some((obj, i));
            }
        }
        let Some((obj, i)) = best else { break };
        current = obj;
        selected.push(i);
        for (j, c) in cover.iter_mut().enumerate() {
            *c = c.min(d[(i, j)]);
        }
    }
    selected.sort_unstable();
    Ok(Selection {
        objective: facility_objective(d, &selected, gamma),
        selected,
        gamma,
        converged: true,
        iterations: 0,
    })
}

/// Exhaustive search over all non-empty subsets; at most 20 candidates.
pub fn select_exhaustive(pool: &CandidatePool, gamma: f64) -> Result<Selection> {
    let d = &pool.distances;
    let n = d.rows();
    if n == 0 || n > 20 {
        return Err(Error::Argument(format!("exhaustive search over {n} candidates")));
    }
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let obj = facility_objective(d, &set, gamma);
        if obj < best.0 {
            best = (obj, set);
        }
    }
    Ok(Selection {
        objective: best.0,
        selected: best.1,
        gamma,
        converged: true,
        iterations: 0,
    })
}

/// One recommended cross in a result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommended {
    pub paternal: String,
    pub maternal: String,
    pub score: f64,
    pub predicted_traits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub selected: Vec<Recommended>,
    pub objective: f64,
    pub gamma: f64,
    pub converged: bool,
}

impl RecommendationResult {
    pub fn empty(gamma: f64) -> Self {
        Self {
            selected: Vec::new(),
            objective: 0.0,
            gamma,
            converged: true,
        }
    }
}

/// Candidate pool, gamma and ADMM selection in one call. An empty pool
/// yields an empty result.
pub fn recommend(
    paternal: &[ParentLine],
    maternal: &[ParentLine],
    config: &RecommendationConfig,
    predictor: &TraitPredictor,
) -> Result<(CandidatePool, RecommendationResult)> {
    let pool = build_candidates(paternal, maternal, config, predictor)?;
    if pool.is_empty() {
        return Ok((pool, RecommendationResult::empty(config.gamma.unwrap_or(0.0))));
    }
    let gamma = match config.gamma {
        Some(g) => g,
        None => derive_gamma(&pool.distances, config.k)?,
    };
    let sel = select_admm(&pool, gamma, &config.admm)?;
    let result = RecommendationResult {
        selected: sel
            .selected
            .iter()
            .map(|&i| {
                let c = &pool.candidates[i];
                Recommended {
                    paternal: c.paternal.clone(),
                    maternal: c.maternal.clone(),
                    score: c.score,
                    predicted_traits: c.predicted_traits.clone(),
                }
            })
            .collect(),
        objective: sel.objective,
        gamma,
        converged: sel.converged,
    };
    Ok((pool, result))
}
