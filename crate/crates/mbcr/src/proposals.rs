//! Reversible-jump proposal moves: relocate all hyperplanes, delete one, or
//! add one by splitting a region of the induced partition.
//!
//! Every move is a block update — the candidate's hyperplanes are all drawn
//! fresh from the NIG posteriors of the basis regions the move conditions
//! on. Each draw carries `log_forward = ln q(candidate | current)` and
//! `log_reverse = ln q(current | candidate)`, including the move-kind
//! probabilities, so the acceptance step only has to add likelihood and
//! prior terms. Densities always condition on the partition induced by the
//! state being conditioned on; degenerate cases where planes swap dominance
//! fall out of that rule automatically.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::conjugate::{nig_log_density, nig_posterior, nig_sample, NigParams};
use crate::core::{
    assign_partition, Dataset, DirectionMode, Hyperplane, ModelState, Partition, PriorConfig,
    ProposalConfig,
};
use crate::error::{Error, Result};

/// Probabilities of attempting each move kind at the current model size `K`:
///
/// ```text
/// b_K = c · min(1, λ/K)        (add)
/// d_K = c · min(1, (K−1)/λ)    (delete; d_1 = 0)
/// r_K = 1 − b_K − d_K          (relocate)
/// ```
///
/// The min-ratios are Poisson pmf ratios of the prior on `K − 1`, so the
/// pair (b, d) pre-balances the prior on model size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpProbabilities {
    pub add: f64,
    pub delete: f64,
    pub relocate: f64,
}

pub fn jump_probabilities(k: usize, lambda: f64, c: f64) -> JumpProbabilities {
    assert!(k >= 1 && lambda > 0.0 && c > 0.0 && c <= 0.5);
    let add = c * (lambda / k as f64).min(1.0);
    let delete = if k == 1 {
        0.0
    } else {
        c * ((k as f64 - 1.0) / lambda).min(1.0)
    };
    JumpProbabilities {
        add,
        delete,
        relocate: 1.0 - add - delete,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Relocate,
    Delete,
    Add,
}

/// A split of one partition region along a direction at a knot. Together
/// with the direction set of the attempt it pins down an addition move.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Region index in the proposing state's partition.
    pub region: usize,
    /// Index into the attempt's direction set.
    pub direction_index: usize,
    /// 0-based knot index (`ℓ − 1` of the `L` interior knots).
    pub knot_index: usize,
    /// Threshold value on the projected coordinate.
    pub knot: f64,
    /// The direction vector itself.
    pub direction: DVector<f64>,
}

/// Auxiliary data a move records so its reverse density can be reconstructed
/// and checked.
#[derive(Debug, Clone)]
pub enum MoveDetail {
    Relocate,
    Add {
        /// The selected split; the new plane sits at the *last* index of the
        /// candidate, so the paired deletion removes that index.
        spec: SplitSpec,
        /// Direction set of this attempt (cardinal axes or fresh Gaussian
        /// draws).
        directions: Vec<DVector<f64>>,
    },
    Delete {
        /// Index of the removed plane in the current state.
        removed: usize,
        /// The reverse addition this deletion is paired with: the
        /// highest-weight split of the candidate's partition, `None` when the
        /// candidate admits no split (the reverse density is then −∞).
        reverse_spec: Option<SplitSpec>,
        reverse_directions: Vec<DVector<f64>>,
    },
}

/// A proposed candidate state with its proposal log densities.
#[derive(Debug, Clone)]
pub struct ProposalDraw {
    pub kind: MoveKind,
    pub candidate: ModelState,
    /// `ln q(candidate | current)`, move-kind probability included.
    pub log_forward: f64,
    /// `ln q(current | candidate)` via the paired reverse move.
    pub log_reverse: f64,
    pub detail: MoveDetail,
}

/// Enumerated splits of a partition with their normalized selection
/// probabilities `p_b(j, ℓ, m) ∝ n_{j⁻} · n_{j⁺}`.
#[derive(Debug, Clone)]
pub struct SplitTable {
    specs: Vec<SplitSpec>,
    weights: Vec<f64>,
}

impl SplitTable {
    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[SplitSpec] {
        &self.specs
    }

    /// Normalized weights, summing to 1 when non-empty.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Selection probability of a spec identified by (region, direction,
    /// knot). `None` when that split was not enumerated (e.g. unsplittable
    /// region).
    pub fn weight_of(&self, region: usize, direction_index: usize, knot_index: usize) -> Option<f64> {
        self.specs
            .iter()
            .position(|s| {
                s.region == region
                    && s.direction_index == direction_index
                    && s.knot_index == knot_index
            })
            .map(|i| self.weights[i])
    }

    /// The highest-weight split; enumeration order (region, direction, knot)
    /// breaks ties, so the result is deterministic.
    pub fn best(&self) -> Option<&SplitSpec> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if best.map(|(_, bw)| w > bw).unwrap_or(true) {
                best = Some((i, w));
            }
        }
        best.map(|(i, _)| &self.specs[i])
    }
}

/// Rebuilds a state with plane `j` moved to the last index — the ordering in
/// which a deletion's reverse addition regenerates it.
pub fn state_with_plane_last(state: &ModelState, j: usize) -> ModelState {
    let mut planes: Vec<Hyperplane> = Vec::with_capacity(state.k());
    for (i, p) in state.planes().iter().enumerate() {
        if i != j {
            planes.push(p.clone());
        }
    }
    planes.push(state.planes()[j].clone());
    ModelState::new(planes).expect("reordering preserves validity")
}

/// Generates proposal draws and evaluates their densities against a fixed
/// dataset, prior, and proposal configuration.
pub struct Proposer<'a> {
    pub data: &'a Dataset,
    pub prior: &'a PriorConfig,
    pub cfg: &'a ProposalConfig,
}

impl<'a> Proposer<'a> {
    pub fn new(data: &'a Dataset, prior: &'a PriorConfig, cfg: &'a ProposalConfig) -> Result<Self> {
        if cfg.nig.dim() != data.dim() + 1 || prior.nig.dim() != data.dim() + 1 {
            return Err(Error::DimensionMismatch {
                expected: data.dim() + 1,
                got: cfg.nig.dim(),
            });
        }
        Ok(Self { data, prior, cfg })
    }

    pub fn jump(&self, k: usize) -> JumpProbabilities {
        jump_probabilities(k, self.prior.lambda, self.cfg.jump_constant)
    }

    /// The direction set for one attempt: the cardinal axes, or `count`
    /// fresh standard-normal vectors drawn from `rng`.
    pub fn directions<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<DVector<f64>> {
        let p = self.data.dim();
        match self.cfg.directions {
            DirectionMode::Cardinal => (0..p)
                .map(|j| DVector::from_fn(p, |i, _| if i == j { 1.0 } else { 0.0 }))
                .collect(),
            DirectionMode::Gaussian { count } => (0..count)
                .map(|_| DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect(),
        }
    }

    /// Deletion selection probabilities over the partition's regions:
    /// `p_d(j) ∝ 1/|C_j|`, with empty regions weighted as `1/0.25`.
    pub fn deletion_weights(&self, part: &Partition) -> Vec<f64> {
        let raw: Vec<f64> = part
            .subsets()
            .iter()
            .map(|s| if s.is_empty() { 4.0 } else { 1.0 / s.len() as f64 })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Enumerates every admissible split of the partition along the given
    /// directions: regions with ≥ 2 points and positive projected spread get
    /// `L` equal-width interior knots per direction, weighted by the product
    /// of the split sizes.
    pub fn split_table(&self, part: &Partition, directions: &[DVector<f64>]) -> SplitTable {
        let l_knots = self.cfg.knots_per_region;
        let mut specs = Vec::new();
        let mut weights = Vec::new();
        for (region, rows) in part.subsets().iter().enumerate() {
            if rows.len() < 2 {
                continue;
            }
            for (m, g) in directions.iter().enumerate() {
                let t: Vec<f64> = rows.iter().map(|&i| self.project(g, i)).collect();
                let (tmin, tmax) = t
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                if !(tmax > tmin) {
                    continue; // zero projected spread along this direction
                }
                for l in 1..=l_knots {
                    let knot = tmin + (tmax - tmin) * l as f64 / (l_knots as f64 + 1.0);
                    let n_minus = t.iter().filter(|&&v| v <= knot).count();
                    let n_plus = rows.len() - n_minus;
                    let w = (n_minus * n_plus) as f64;
                    if w > 0.0 {
                        specs.push(SplitSpec {
                            region,
                            direction_index: m,
                            knot_index: l - 1,
                            knot,
                            direction: g.clone(),
                        });
                        weights.push(w);
                    }
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in &mut weights {
                *w /= total;
            }
        }
        SplitTable { specs, weights }
    }

    /// Relocation: resample all `K` hyperplanes from the posteriors of the
    /// current partition's regions.
    pub fn propose_relocation<R: Rng + ?Sized>(
        &self,
        state: &ModelState,
        rng: &mut R,
    ) -> Result<ProposalDraw> {
        let part = assign_partition(state, self.data);
        let posts = self.region_posteriors(part.subsets())?;
        let (candidate, log_h) = self.sample_state(&posts, rng)?;
        let r_k = self.jump(state.k()).relocate.ln();
        let log_forward = r_k + log_h;
        let log_reverse = r_k + self.state_log_density_under(&candidate, state)?;
        Ok(ProposalDraw {
            kind: MoveKind::Relocate,
            candidate,
            log_forward,
            log_reverse,
            detail: MoveDetail::Relocate,
        })
    }

    /// Deletion: select a plane with probability ∝ 1/|C_j|, drop it, and
    /// resample the remaining `K − 1` planes from the reduced partition's
    /// posteriors. Requires `K ≥ 2`.
    pub fn propose_deletion<R: Rng + ?Sized>(
        &self,
        state: &ModelState,
        rng: &mut R,
    ) -> Result<ProposalDraw> {
        if state.k() < 2 {
            return Err(Error::InvalidInput("cannot delete from a single-plane state".into()));
        }
        let part = assign_partition(state, self.data);
        let weights = self.deletion_weights(&part);
        let removed = categorical(&weights, rng);

        let survivors = survivor_state(state, removed);
        let reduced = assign_partition(&survivors, self.data);
        let posts = self.region_posteriors(reduced.subsets())?;
        let (candidate, log_h) = self.sample_state(&posts, rng)?;
        let log_forward = self.jump(state.k()).delete.ln() + weights[removed].ln() + log_h;

        // Pair this deletion with the most probable addition that could
        // regenerate the current state (deleted plane re-added last).
        let reverse_directions = self.directions(rng);
        let cand_part = assign_partition(&candidate, self.data);
        let table = self.split_table(&cand_part, &reverse_directions);
        let (log_reverse, reverse_spec) = match table.best() {
            None => (f64::NEG_INFINITY, None),
            Some(spec) => {
                let reordered = state_with_plane_last(state, removed);
                let lr = self.addition_log_density(&candidate, &reverse_directions, spec, &reordered)?;
                (lr, Some(spec.clone()))
            }
        };

        Ok(ProposalDraw {
            kind: MoveKind::Delete,
            candidate,
            log_forward,
            log_reverse,
            detail: MoveDetail::Delete {
                removed,
                reverse_spec,
                reverse_directions,
            },
        })
    }

    /// Addition: select a split `(region, direction, knot)` with probability
    /// ∝ n⁻·n⁺, refine the partition, and resample all `K + 1` planes — the
    /// plane of the new (upper) half goes last. Returns `Ok(None)` when no
    /// region is splittable, which the sampler treats as a rejected attempt.
    pub fn propose_addition<R: Rng + ?Sized>(
        &self,
        state: &ModelState,
        rng: &mut R,
    ) -> Result<Option<ProposalDraw>> {
        let part = assign_partition(state, self.data);
        let directions = self.directions(rng);
        let table = self.split_table(&part, &directions);
        if table.is_empty() {
            return Ok(None);
        }
        let idx = categorical(table.weights(), rng);
        let spec = table.specs()[idx].clone();

        let refined = refine_subsets(self, &part, &spec);
        let posts = self.region_posteriors(&refined)?;
        let (candidate, log_h) = self.sample_state(&posts, rng)?;
        let log_forward = self.jump(state.k()).add.ln() + table.weights()[idx].ln() + log_h;

        // The paired reverse move deletes the plane we just appended.
        let log_reverse = self.deletion_log_density(&candidate, candidate.k() - 1, state)?;

        Ok(Some(ProposalDraw {
            kind: MoveKind::Add,
            candidate,
            log_forward,
            log_reverse,
            detail: MoveDetail::Add { spec, directions },
        }))
    }

    /// `ln q(to | from)` for a relocation (both states share `K`).
    pub fn relocation_log_density(&self, from: &ModelState, to: &ModelState) -> Result<f64> {
        if from.k() != to.k() {
            return Err(Error::InvalidInput("relocation requires equal plane counts".into()));
        }
        Ok(self.jump(from.k()).relocate.ln() + self.state_log_density_under(from, to)?)
    }

    /// `ln q(to | from)` for the deletion of plane `removed` from `from`:
    /// move-kind and selection probabilities plus the density of `to`'s
    /// planes under the reduced partition's posteriors.
    pub fn deletion_log_density(
        &self,
        from: &ModelState,
        removed: usize,
        to: &ModelState,
    ) -> Result<f64> {
        if from.k() < 2 || removed >= from.k() || to.k() + 1 != from.k() {
            return Err(Error::InvalidInput("invalid deletion geometry".into()));
        }
        let part = assign_partition(from, self.data);
        let weights = self.deletion_weights(&part);
        let survivors = survivor_state(from, removed);
        let reduced = assign_partition(&survivors, self.data);
        let posts = self.region_posteriors(reduced.subsets())?;
        let mut logq = self.jump(from.k()).delete.ln() + weights[removed].ln();
        for (k, post) in posts.iter().enumerate() {
            let plane = &to.planes()[k];
            logq += nig_log_density(post, &plane_theta(plane), plane.sigma2);
        }
        Ok(logq)
    }

    /// `ln q(to | from)` for the addition applying `spec` (with the given
    /// direction set) to `from`'s partition. `to`'s last plane is matched to
    /// the new (upper) region.
    pub fn addition_log_density(
        &self,
        from: &ModelState,
        directions: &[DVector<f64>],
        spec: &SplitSpec,
        to: &ModelState,
    ) -> Result<f64> {
        if to.k() != from.k() + 1 {
            return Err(Error::InvalidInput("invalid addition geometry".into()));
        }
        let part = assign_partition(from, self.data);
        let table = self.split_table(&part, directions);
        let Some(p_b) = table.weight_of(spec.region, spec.direction_index, spec.knot_index) else {
            return Ok(f64::NEG_INFINITY); // that split cannot be generated
        };
        let refined = refine_subsets(self, &part, spec);
        let posts = self.region_posteriors(&refined)?;
        let mut logq = self.jump(from.k()).add.ln() + p_b.ln();
        for (k, post) in posts.iter().enumerate() {
            let plane = &to.planes()[k];
            logq += nig_log_density(post, &plane_theta(plane), plane.sigma2);
        }
        Ok(logq)
    }

    /// Density of `to`'s planes under the posteriors of `from`'s partition
    /// (the relocation kernel without the move-kind factor).
    fn state_log_density_under(&self, from: &ModelState, to: &ModelState) -> Result<f64> {
        let part = assign_partition(from, self.data);
        let posts = self.region_posteriors(part.subsets())?;
        let mut logq = 0.0;
        for (k, post) in posts.iter().enumerate() {
            let plane = &to.planes()[k];
            logq += nig_log_density(post, &plane_theta(plane), plane.sigma2);
        }
        Ok(logq)
    }

    fn region_posteriors(&self, subsets: &[Vec<usize>]) -> Result<Vec<NigParams>> {
        subsets
            .iter()
            .map(|rows| nig_posterior(&self.cfg.nig, self.data, rows))
            .collect()
    }

    /// Draws one plane per posterior (σ² then θ, in region order) and
    /// accumulates the joint log density of the drawn values.
    fn sample_state<R: Rng + ?Sized>(
        &self,
        posts: &[NigParams],
        rng: &mut R,
    ) -> Result<(ModelState, f64)> {
        let p = self.data.dim();
        let mut planes = Vec::with_capacity(posts.len());
        let mut log_h = 0.0;
        for post in posts {
            let (theta, sigma2) = nig_sample(post, None, rng)?;
            log_h += nig_log_density(post, &theta, sigma2);
            let beta = DVector::from_fn(p, |j, _| theta[j + 1]);
            planes.push(Hyperplane::new(theta[0], beta, sigma2)?);
        }
        Ok((ModelState::new(planes)?, log_h))
    }

    fn project(&self, g: &DVector<f64>, row: usize) -> f64 {
        let mut t = 0.0;
        for j in 0..self.data.dim() {
            t += g[j] * self.data.x()[(row, j)];
        }
        t
    }
}

/// The current planes minus plane `j`, order preserved.
fn survivor_state(state: &ModelState, j: usize) -> ModelState {
    let planes: Vec<Hyperplane> = state
        .planes()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| (i != j).then(|| p.clone()))
        .collect();
    ModelState::new(planes).expect("deletion from K ≥ 2 leaves a valid state")
}

/// Region list after applying a split: the lower half replaces the split
/// region in place, the upper half is appended last.
fn refine_subsets(proposer: &Proposer, part: &Partition, spec: &SplitSpec) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = part.subsets().to_vec();
    let rows = std::mem::take(&mut subsets[spec.region]);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for i in rows {
        if proposer.project(&spec.direction, i) <= spec.knot {
            lower.push(i);
        } else {
            upper.push(i);
        }
    }
    subsets[spec.region] = lower;
    subsets.push(upper);
    subsets
}

fn plane_theta(plane: &Hyperplane) -> DVector<f64> {
    let mut theta = DVector::zeros(plane.beta.len() + 1);
    theta[0] = plane.alpha;
    for j in 0..plane.beta.len() {
        theta[j + 1] = plane.beta[j];
    }
    theta
}

/// Samples an index from normalized weights with a single uniform draw.
fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1 // guard against rounding in the cumulative sum
}
