//! Truncated four-mode Fock-space simulation of the lossy PDC source.
//!
//! Occupations are ordered `(n_ah, n_av, n_bh, n_bv)`. Within an arm holding
//! `n` photons the Schwinger map gives spin `n/2` with `m = (n_h - n_v)/2`, so
//! the multiplet index (m descending) is simply `n_v`. Densities conditioned on
//! the detected photon numbers `(n_a, n_b)` live on the product of the two
//! multiplets and are indexed `n_av * (n_b + 1) + n_bv`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angular::{coupling_matrix, rotation_generator, HalfInt, WignerSmallD, YRotation};
use crate::error::{ensure_finite, Error, Result};
use crate::loss_model::{effective_params, LossParams};
use crate::pdc_source::PdcParams;

/// Occupation numbers `(n_ah, n_av, n_bh, n_bv)`.
pub type Occupation = [u32; 4];

/// Per-arm detected photon window used by default.
pub const DEFAULT_ARM_CUTOFF: usize = 16;
/// Largest truncation tail accepted by [`build_pdc_state`].
pub const MAX_STATE_TAIL: f64 = 0.1;
/// Loss branches lighter than this are dropped and counted as pruned mass.
pub const PRUNE_WEIGHT: f64 = 1e-16;
/// Density eigenvalues below this are treated as exact zeros.
pub const EIGEN_FLOOR: f64 = 1e-14;
/// Default truncation tolerance of the streamed source.
pub const DEFAULT_SOURCE_TOLERANCE: f64 = 1e-12;
/// Probabilities below this are treated as exact zeros of the outcome
/// distribution when forming Fisher information.
const OUTCOME_ZERO: f64 = 1e-20;
/// Weights below this make a conditional subspace empty.
const EMPTY_WEIGHT: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    AH,
    AV,
    BH,
    BV,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::AH, Mode::AV, Mode::BH, Mode::BV];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Sparse four-mode state vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FockVector {
    amplitudes: BTreeMap<Occupation, Complex64>,
    cutoff: usize,
    tail: f64,
}

impl FockVector {
    /// Empty vector admitting up to `cutoff` photons per arm.
    pub fn new(cutoff: usize) -> Self {
        FockVector {
            amplitudes: BTreeMap::new(),
            cutoff,
            tail: 0.0,
        }
    }

    pub fn basis(occ: Occupation, cutoff: usize) -> Result<Self> {
        let mut v = FockVector::new(cutoff);
        v.add(occ, Complex64::new(1.0, 0.0))?;
        Ok(v)
    }

    #[inline]
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Probability mass removed by truncation before this vector was formed.
    #[inline]
    pub fn tail(&self) -> f64 {
        self.tail
    }

    #[inline]
    pub fn amplitudes(&self) -> &BTreeMap<Occupation, Complex64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.amplitudes.get(occ).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Adds `amp` to the amplitude of `occ`.
    pub fn add(&mut self, occ: Occupation, amp: Complex64) -> Result<()> {
        let (na, nb) = arm_numbers(&occ);
        let worst = na.max(nb) as usize;
        if worst > self.cutoff {
            return Err(Error::InvalidParameter {
                name: "occupation",
                value: worst as f64,
                reason: "arm photon number exceeds the vector's cutoff",
            });
        }
        *self.amplitudes.entry(occ).or_default() += amp;
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &FockVector) -> Complex64 {
        self.amplitudes
            .iter()
            .map(|(occ, a)| a.conj() * other.amplitude(occ))
            .sum()
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amplitudes.values_mut().for_each(|a| *a *= factor);
    }

    /// Expectation of the total photon number (unnormalised).
    pub fn photon_number_moment(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|(occ, a)| a.norm_sqr() * occ.iter().sum::<u32>() as f64)
            .sum()
    }

    /// Annihilation operator on `mode`.
    pub fn lower(&self, mode: Mode) -> FockVector {
        let i = mode.index();
        let mut out = FockVector {
            amplitudes: BTreeMap::new(),
            cutoff: self.cutoff,
            tail: self.tail,
        };
        for (occ, a) in &self.amplitudes {
            if occ[i] == 0 {
                continue;
            }
            let mut next = *occ;
            next[i] -= 1;
            *out.amplitudes.entry(next).or_default() += *a * (occ[i] as f64).sqrt();
        }
        out
    }

    /// Creation operator on `mode`; the cutoff grows if needed.
    pub fn raise(&self, mode: Mode) -> FockVector {
        let i = mode.index();
        let mut out = FockVector {
            amplitudes: BTreeMap::new(),
            cutoff: self.cutoff,
            tail: self.tail,
        };
        for (occ, a) in &self.amplitudes {
            let mut next = *occ;
            next[i] += 1;
            let (na, nb) = arm_numbers(&next);
            out.cutoff = out.cutoff.max(na.max(nb) as usize);
            *out.amplitudes.entry(next).or_default() += *a * (next[i] as f64).sqrt();
        }
        out
    }

    /// Component with exactly `n_a` and `n_b` photons in the two arms.
    pub fn project(&self, n_a: u32, n_b: u32) -> FockVector {
        FockVector {
            amplitudes: self
                .amplitudes
                .iter()
                .filter(|(occ, _)| arm_numbers(occ) == (n_a, n_b))
                .map(|(o, a)| (*o, *a))
                .collect(),
            cutoff: self.cutoff,
            tail: self.tail,
        }
    }

    /// Applies `exp(-iφ J_yb)` sector by sector.
    pub fn rotate_b(&self, phi: f64) -> Result<FockVector> {
        ensure_finite("phi", phi)?;
        let mut cache: HashMap<u32, WignerSmallD> = HashMap::new();
        let mut out = FockVector {
            amplitudes: BTreeMap::new(),
            cutoff: self.cutoff,
            tail: self.tail,
        };
        for (occ, a) in &self.amplitudes {
            let nb = occ[2] + occ[3];
            if nb == 0 {
                *out.amplitudes.entry(*occ).or_default() += *a;
                continue;
            }
            let d = match cache.get(&nb) {
                Some(d) => d,
                None => {
                    let d = wigner_for(nb, phi)?;
                    cache.entry(nb).or_insert(d)
                }
            };
            // out[m'] = Σ_m d_{m'm} in[m]; the multiplet index is n_bv.
            let col = occ[3] as usize;
            for row in 0..=nb as usize {
                let coeff = d.entries()[(row, col)];
                if coeff == 0.0 {
                    continue;
                }
                let target = [occ[0], occ[1], nb - row as u32, row as u32];
                *out.amplitudes.entry(target).or_default() += *a * coeff;
            }
        }
        Ok(out)
    }
}

fn wigner_for(n: u32, phi: f64) -> Result<WignerSmallD> {
    YRotation::new(HalfInt::from_twice(n as i32))?.matrix(phi)
}

/// Photons in arm a and arm b.
#[inline]
pub fn arm_numbers(occ: &Occupation) -> (u32, u32) {
    (occ[0] + occ[1], occ[2] + occ[3])
}

/// The spin-j singlet in its four-mode optical form.
pub fn singlet_state(j: HalfInt) -> Result<FockVector> {
    let probe = crate::singlet_probe::SingletProbe::new(j)?;
    let n = j.twice() as u32;
    let mut v = FockVector::new(n as usize);
    for (m, c) in probe.coefficients() {
        let up = (j + m).twice() as u32 / 2;
        let down = n - up;
        v.add([up, down, down, up], Complex64::new(c, 0.0))?;
    }
    Ok(v)
}

/// `Σ_n λⁿ e^{inφ_p}/cosh²τ Σ_m (-1)^m |n-m, m, m, n-m⟩` for `n ≤ cutoff`.
///
/// Amplitudes are not renormalised: the norm deficit equals the reported tail.
pub fn build_pdc_state(pdc: &PdcParams, cutoff: usize) -> Result<FockVector> {
    let tail = pdc.pair_tail(cutoff);
    if tail > MAX_STATE_TAIL {
        return Err(Error::InsufficientCutoff {
            cutoff,
            tail,
            allowed: MAX_STATE_TAIL,
        });
    }
    let mut v = FockVector::new(cutoff);
    v.tail = tail;
    let lambda = pdc.lambda();
    let lead = pdc.tau().cosh().powi(-2);
    for n in 0..=cutoff {
        let c = Complex64::from_polar(lead * lambda.powi(n as i32), n as f64 * pdc.pump_phase());
        if c.norm() == 0.0 {
            break;
        }
        let n = n as u32;
        for m in 0..=n {
            let amp = if m % 2 == 0 { c } else { -c };
            v.add([n - m, m, m, n - m], amp)?;
        }
    }
    Ok(v)
}

/// `√(C(n,k) (1-η)^k η^{n-k})`, the amplitude for losing `k` of `n` photons.
#[derive(Clone, Debug)]
struct ThinningTable {
    rows: Vec<Vec<f64>>,
}

impl ThinningTable {
    fn new(max_n: usize, eta: f64) -> Self {
        let loss = 1.0 - eta;
        let rows = (0..=max_n)
            .map(|n| {
                let mut binom = 1.0;
                (0..=n)
                    .map(|k| {
                        if k > 0 {
                            binom = binom * (n - k + 1) as f64 / k as f64;
                        }
                        (binom * loss.powi(k as i32) * eta.powi((n - k) as i32)).sqrt()
                    })
                    .collect()
            })
            .collect();
        ThinningTable { rows }
    }

    #[inline]
    fn get(&self, n: usize, k: usize) -> f64 {
        self.rows[n][k]
    }
}

/// One Kraus outcome of the four-mode loss channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub weight: f64,
    /// Photons lost from each mode.
    pub losses: Occupation,
    /// Normalised conditional state.
    pub state: FockVector,
}

/// Pure-state decomposition of a lossy density operator.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BranchEnsemble {
    pub branches: Vec<Branch>,
    /// Total weight of pruned branches.
    pub pruned: f64,
    /// Truncation tail inherited from the input state.
    pub tail: f64,
}

impl BranchEnsemble {
    pub fn pure(state: FockVector) -> Self {
        let weight = state.norm_sqr();
        let tail = state.tail;
        let mut state = state;
        if weight > 0.0 {
            state.scale(Complex64::new(weight.sqrt().recip(), 0.0));
        }
        BranchEnsemble {
            branches: vec![Branch {
                weight,
                losses: [0; 4],
                state,
            }],
            pruned: 0.0,
            tail,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|b| b.weight).sum()
    }

    pub fn cutoff(&self) -> usize {
        self.branches.iter().map(|b| b.state.cutoff).max().unwrap_or(0)
    }

    pub fn rotate_b(&self, phi: f64) -> Result<BranchEnsemble> {
        let branches = self
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    weight: b.weight,
                    losses: b.losses,
                    state: b.state.rotate_b(phi)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(BranchEnsemble {
            branches,
            pruned: self.pruned,
            tail: self.tail,
        })
    }

    /// Diagonal of the density operator in the occupation basis.
    pub fn occupation_distribution(&self) -> BTreeMap<Occupation, f64> {
        let mut out = BTreeMap::new();
        for b in &self.branches {
            for (occ, a) in &b.state.amplitudes {
                *out.entry(*occ).or_insert(0.0) += b.weight * a.norm_sqr();
            }
        }
        out
    }

    /// `P(n_a, n_b)` over `0..=cutoff` in each arm.
    pub fn joint_distribution(&self) -> DMatrix<f64> {
        let c = self.cutoff();
        let mut p = DMatrix::zeros(c + 1, c + 1);
        for (occ, w) in self.occupation_distribution() {
            let (na, nb) = arm_numbers(&occ);
            p[(na as usize, nb as usize)] += w;
        }
        p
    }

    /// Density conditioned on `n_a`, `n_b` detected photons.
    pub fn subspace_density(&self, n_a: u32, n_b: u32) -> Result<SubspaceDensity> {
        let dim = (n_a as usize + 1) * (n_b as usize + 1);
        let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
        for b in &self.branches {
            let entries: Vec<(usize, Complex64)> = b
                .state
                .amplitudes
                .iter()
                .filter(|(occ, _)| arm_numbers(occ) == (n_a, n_b))
                .map(|(occ, a)| (subspace_index(n_b, occ[1], occ[3]), *a))
                .collect();
            accumulate_outer(&mut rho, &entries, b.weight);
        }
        SubspaceDensity::from_unnormalized(
            n_a,
            n_b,
            rho,
            Truncation {
                source_cutoff: self.cutoff(),
                tail: self.tail + self.pruned,
            },
        )
    }
}

#[inline]
fn subspace_index(n_b: u32, n_av: u32, n_bv: u32) -> usize {
    n_av as usize * (n_b as usize + 1) + n_bv as usize
}

fn accumulate_outer(rho: &mut DMatrix<Complex64>, entries: &[(usize, Complex64)], weight: f64) {
    for &(r, x) in entries {
        for &(c, y) in entries {
            rho[(r, c)] += x * y.conj() * weight;
        }
    }
}

/// Applies the loss channel with transmission `η` to every mode.
pub fn apply_loss(state: &FockVector, loss: &LossParams) -> BranchEnsemble {
    let eta = loss.eta();
    if eta == 1.0 {
        return BranchEnsemble::pure(state.clone());
    }
    let max_n = state
        .amplitudes
        .keys()
        .flat_map(|o| o.iter().copied())
        .max()
        .unwrap_or(0) as usize;
    let table = ThinningTable::new(max_n, eta);
    let mut raw: BTreeMap<Occupation, FockVector> = BTreeMap::new();
    for (occ, a) in &state.amplitudes {
        let n = occ.map(|x| x as usize);
        for k0 in 0..=n[0] {
            let f0 = table.get(n[0], k0);
            if f0 == 0.0 {
                continue;
            }
            for k1 in 0..=n[1] {
                let f1 = f0 * table.get(n[1], k1);
                if f1 == 0.0 {
                    continue;
                }
                for k2 in 0..=n[2] {
                    let f2 = f1 * table.get(n[2], k2);
                    if f2 == 0.0 {
                        continue;
                    }
                    for k3 in 0..=n[3] {
                        let f = f2 * table.get(n[3], k3);
                        if f == 0.0 {
                            continue;
                        }
                        let k = [k0 as u32, k1 as u32, k2 as u32, k3 as u32];
                        let out = [occ[0] - k[0], occ[1] - k[1], occ[2] - k[2], occ[3] - k[3]];
                        let branch = raw.entry(k).or_insert_with(|| FockVector {
                            amplitudes: BTreeMap::new(),
                            cutoff: state.cutoff,
                            tail: state.tail,
                        });
                        *branch.amplitudes.entry(out).or_default() += *a * f;
                    }
                }
            }
        }
    }
    let mut ensemble = BranchEnsemble {
        branches: Vec::with_capacity(raw.len()),
        pruned: 0.0,
        tail: state.tail,
    };
    for (losses, mut v) in raw {
        let weight = v.norm_sqr();
        if weight < PRUNE_WEIGHT {
            ensemble.pruned += weight;
            continue;
        }
        v.scale(Complex64::new(weight.sqrt().recip(), 0.0));
        ensemble.branches.push(Branch {
            weight,
            losses,
            state: v,
        });
    }
    ensemble
}

/// Where a conditional density was truncated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Largest pair number (photons per arm) kept at the source.
    pub source_cutoff: usize,
    /// Neglected probability mass; for streamed densities this is relative
    /// to the subspace weight.
    pub tail: f64,
}

/// Normalised density operator on the `(n_a, n_b)` detection subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceDensity {
    pub n_a: u32,
    pub n_b: u32,
    pub matrix: DMatrix<Complex64>,
    /// Post-selection probability `P(n_a, n_b)`.
    pub weight: f64,
    pub truncation: Truncation,
}

impl SubspaceDensity {
    pub fn from_unnormalized(
        n_a: u32,
        n_b: u32,
        matrix: DMatrix<Complex64>,
        truncation: Truncation,
    ) -> Result<Self> {
        let weight = matrix.trace().re;
        if !(weight >= EMPTY_WEIGHT) {
            return Err(Error::EmptySubspace {
                n_a: n_a as usize,
                n_b: n_b as usize,
                weight,
            });
        }
        Ok(SubspaceDensity {
            n_a,
            n_b,
            matrix: matrix / Complex64::new(weight, 0.0),
            weight,
            truncation,
        })
    }

    pub fn j_a(&self) -> HalfInt {
        HalfInt::from_twice(self.n_a as i32)
    }

    pub fn j_b(&self) -> HalfInt {
        HalfInt::from_twice(self.n_b as i32)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenpairs with eigenvalues at or below [`EIGEN_FLOOR`] discarded.
    fn spectrum(&self) -> Vec<(f64, DVector<Complex64>)> {
        let eig = SymmetricEigen::new(self.matrix.clone());
        eig.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > EIGEN_FLOOR)
            .map(|(q, &l)| (l, eig.eigenvectors.column(q).into_owned()))
            .collect()
    }

    /// `(I ⊗ M) v` for a b-multiplet matrix `M`.
    fn apply_b(&self, m: &DMatrix<f64>, v: &DVector<Complex64>) -> DVector<Complex64> {
        let db = self.n_b as usize + 1;
        let mut out = DVector::zeros(v.len());
        for ia in 0..=self.n_a as usize {
            for row in 0..db {
                let mut acc = Complex64::default();
                for col in 0..db {
                    acc += v[ia * db + col] * m[(row, col)];
                }
                out[ia * db + row] = acc;
            }
        }
        out
    }

    /// Distribution of `(J_za, J_zb)` after rotating arm b by `φ`; entry
    /// `(i_a, i_b)` is the outcome `(j_a - i_a, j_b - i_b)`.
    pub fn outcome_distribution(&self, phi: f64) -> Result<DMatrix<f64>> {
        let d = wigner_for(self.n_b, phi)?;
        let db = self.n_b as usize + 1;
        let mut p = DMatrix::zeros(self.n_a as usize + 1, db);
        for (l, v) in self.spectrum() {
            let u = self.apply_b(d.entries(), &v);
            for (i, x) in u.iter().enumerate() {
                p[(i / db, i % db)] += l * x.norm_sqr();
            }
        }
        Ok(p)
    }

    /// Classical Fisher information of the `J_za ⊗ J_zb` measurement.
    pub fn cfi(&self, phi: f64) -> Result<f64> {
        let d = wigner_for(self.n_b, phi)?;
        let dd = d.derivative();
        let dim = self.dim();
        let mut p = vec![0.0; dim];
        let mut dp = vec![0.0; dim];
        let mut slope = vec![0.0; dim];
        for (l, v) in self.spectrum() {
            let u = self.apply_b(d.entries(), &v);
            let du = self.apply_b(&dd, &v);
            for i in 0..dim {
                p[i] += l * u[i].norm_sqr();
                dp[i] += 2.0 * l * (u[i].conj() * du[i]).re;
                slope[i] += l * du[i].norm_sqr();
            }
        }
        Ok((0..dim)
            .map(|i| {
                if p[i] < OUTCOME_ZERO {
                    4.0 * slope[i]
                } else {
                    dp[i] * dp[i] / p[i]
                }
            })
            .sum())
    }

    /// Mixed-state quantum Fisher information for `J_yb`,
    /// `2 Σ (ρ_q - ρ_r)²/(ρ_q + ρ_r) |⟨q|J_yb|r⟩|²`.
    pub fn qfi(&self) -> Result<f64> {
        let g = rotation_generator(self.j_b())?;
        let eig = SymmetricEigen::new(self.matrix.clone());
        let vals: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&l| if l > EIGEN_FLOOR { l } else { 0.0 })
            .collect();
        let gv: Vec<DVector<Complex64>> = (0..self.dim())
            .map(|r| self.apply_b(&g, &eig.eigenvectors.column(r).into_owned()))
            .collect();
        let mut total = 0.0;
        for (q, &lq) in vals.iter().enumerate() {
            let vq = eig.eigenvectors.column(q);
            for (r, &lr) in vals.iter().enumerate() {
                let s = lq + lr;
                if s < EIGEN_FLOOR {
                    continue;
                }
                let elt = vq.dotc(&gv[r]).norm_sqr();
                total += (lq - lr).powi(2) / s * elt;
            }
        }
        Ok(2.0 * total)
    }

    /// Maximum of [`Self::cfi`] over `φ ∈ [0, π]`: a grid search followed by
    /// golden-section refinement around the best node.
    pub fn max_cfi_over_phi(&self, grid_points: usize) -> Result<(f64, f64)> {
        let n = grid_points.max(3);
        let step = std::f64::consts::PI / (n - 1) as f64;
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..n {
            let phi = i as f64 * step;
            let v = self.cfi(phi)?;
            if v > best.1 {
                best = (phi, v);
            }
        }
        let (mut lo, mut hi) = ((best.0 - step).max(0.0), (best.0 + step).min(std::f64::consts::PI));
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (self.cfi(x1)?, self.cfi(x2)?);
        for _ in 0..60 {
            if f1 > f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = self.cfi(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = self.cfi(x2)?;
            }
        }
        let (x, f) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
        Ok(if f > best.1 { (x, f) } else { best })
    }

    /// `½ Σ |eig(ρ - σ)|`.
    pub fn trace_distance(&self, other: &SubspaceDensity) -> Result<f64> {
        if (self.n_a, self.n_b) != (other.n_a, other.n_b) {
            return Err(Error::InvalidParameter {
                name: "subspace",
                value: other.n_a as f64,
                reason: "trace distance needs densities on the same subspace",
            });
        }
        let diff = &self.matrix - &other.matrix;
        let eig = SymmetricEigen::new(diff);
        Ok(0.5 * eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
    }
}

/// Classical Fisher information of the `(n_a, n_b)` conditional state.
pub fn conditional_cfi(pdc: &PdcParams, loss: &LossParams, n_a: u32, n_b: u32, phi: f64) -> Result<f64> {
    LossyPdc::new(*pdc, *loss)
        .subspace_density(n_a, n_b)?
        .cfi(phi)
}

/// Quantum Fisher information of a conditional state.
pub fn subspace_qfi(density: &SubspaceDensity) -> Result<f64> {
    density.qfi()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub j: HalfInt,
    /// Trace weight `μ_J` of the block.
    pub mu: f64,
    /// Operator-norm distance of the block from `μ_J/(2J+1)·I`.
    pub identity_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDecomposition {
    /// Blocks in descending `J`.
    pub blocks: Vec<Block>,
    /// Frobenius norm of everything outside the diagonal blocks.
    pub off_block_residual: f64,
}

impl BlockDecomposition {
    pub fn mu(&self, j: HalfInt) -> f64 {
        self.blocks.iter().find(|b| b.j == j).map_or(0.0, |b| b.mu)
    }

    pub fn total_mu(&self) -> f64 {
        self.blocks.iter().map(|b| b.mu).sum()
    }
}

/// Conditional density expressed in the total-spin basis of the two arms.
pub fn block_decomposition(density: &SubspaceDensity) -> Result<BlockDecomposition> {
    let cm = coupling_matrix(density.j_a(), density.j_b())?;
    let c = cm.matrix.map(|x| Complex64::new(x, 0.0));
    let coupled = &c * &density.matrix * c.transpose();
    let n = coupled.nrows();
    let label = |r: usize| cm.labels[r].0;

    let mut off = 0.0;
    for r in 0..n {
        for col in 0..n {
            if label(r) != label(col) {
                off += coupled[(r, col)].norm_sqr();
            }
        }
    }

    let mut blocks = Vec::new();
    let mut start = 0;
    while start < n {
        let j = label(start);
        let size = j.dim();
        let block = coupled.view((start, start), (size, size)).into_owned();
        let mu = block.trace().re;
        let target = Complex64::new(mu / size as f64, 0.0);
        let dev = block - DMatrix::from_diagonal_element(size, size, target);
        let eig = SymmetricEigen::new(dev);
        let identity_deviation = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        blocks.push(Block {
            j,
            mu,
            identity_deviation,
        });
        start += size;
    }
    Ok(BlockDecomposition {
        blocks,
        off_block_residual: off.sqrt(),
    })
}

/// Lossy PDC source evaluated sector by sector without building the global
/// state.
///
/// A conditional subspace `(n_a, n_b)` receives contributions from every pair
/// number `n ≥ max(n_a, n_b)`, one pure branch per way of losing `n - n_a`
/// photons from arm a and `n - n_b` from arm b. Branches with different loss
/// patterns are orthogonal in the environment and add incoherently.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossyPdc {
    pdc: PdcParams,
    loss: LossParams,
    tolerance: f64,
}

impl LossyPdc {
    pub fn new(pdc: PdcParams, loss: LossParams) -> Self {
        LossyPdc {
            pdc,
            loss,
            tolerance: DEFAULT_SOURCE_TOLERANCE,
        }
    }

    pub fn with_tolerance(pdc: PdcParams, loss: LossParams, tolerance: f64) -> Result<Self> {
        ensure_finite("tolerance", tolerance)?;
        if tolerance <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                value: tolerance,
                reason: "tolerance must be positive",
            });
        }
        Ok(LossyPdc { pdc, loss, tolerance })
    }

    pub fn pdc(&self) -> &PdcParams {
        &self.pdc
    }

    pub fn loss(&self) -> &LossParams {
        &self.loss
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Smallest source cutoff `C ≥ floor` whose neglected mass, as given by
    /// the per-`n` contributions `term`, is below `allowed`.
    fn cutoff_for(&self, floor: usize, allowed: f64, term: impl Fn(usize) -> f64) -> Result<Truncation> {
        // Terms eventually decay geometrically at ratio ≤ tanh²τ; once past the
        // peak, the remaining sum is bounded by term/(1 - ratio).
        let x = self.pdc.lambda().powi(2);
        if x == 0.0 {
            return Ok(Truncation {
                source_cutoff: floor,
                tail: 0.0,
            });
        }
        let mut terms: Vec<f64> = Vec::new();
        let limit = 2_000_000;
        for n in 0.. {
            let t = self.pdc.pair_weight(n) * term(n);
            terms.push(t);
            if n > floor + 2 && n > 8 {
                let prev = terms[n - 1];
                let ratio = if prev > 0.0 { t / prev } else { 0.0 };
                if ratio < 1.0 && t / (1.0 - ratio.max(x)) < allowed * 1e-6 {
                    break;
                }
            }
            if n >= limit {
                return Err(Error::InsufficientCutoff {
                    cutoff: n,
                    tail: t,
                    allowed,
                });
            }
        }
        let mut tail = 0.0;
        let mut cutoff = terms.len() - 1;
        while cutoff > floor && tail + terms[cutoff] < allowed {
            tail += terms[cutoff];
            cutoff -= 1;
        }
        Ok(Truncation {
            source_cutoff: cutoff,
            tail,
        })
    }

    /// Truncation used for the joint distribution over `n_a, n_b ≤ window`.
    pub fn window_truncation(&self, window: usize) -> Result<Truncation> {
        let eta = self.loss.eta();
        self.cutoff_for(window, self.tolerance, |n| binomial_cdf(window, n, eta).powi(2))
    }

    /// Truncation used for a single subspace, relative to its weight.
    pub fn subspace_truncation(&self, n_a: u32, n_b: u32) -> Result<Truncation> {
        let eta = self.loss.eta();
        let (na, nb) = (n_a as usize, n_b as usize);
        let weight = self.thinning_probability(na, nb);
        if !(weight >= EMPTY_WEIGHT) {
            return Err(Error::EmptySubspace {
                n_a: n_a as usize,
                n_b: n_b as usize,
                weight,
            });
        }
        let t = self.cutoff_for(na.max(nb), self.tolerance * weight, |n| {
            binomial_pmf(na, n, eta) * binomial_pmf(nb, n, eta)
        })?;
        Ok(Truncation {
            source_cutoff: t.source_cutoff,
            tail: t.tail / weight,
        })
    }

    /// Closed-form `Σ_n w_n Binom(n_a; n, η) Binom(n_b; n, η)`, used only to
    /// size the truncation.
    fn thinning_probability(&self, na: usize, nb: usize) -> f64 {
        let eta = self.loss.eta();
        let x = self.pdc.lambda().powi(2);
        let mut total = 0.0;
        let mut n = na.max(nb);
        let mut last = f64::INFINITY;
        loop {
            let t = self.pdc.pair_weight(n) * binomial_pmf(na, n, eta) * binomial_pmf(nb, n, eta);
            total += t;
            if x == 0.0 || eta == 1.0 || (t < last && t < 1e-18 * total.max(1e-300)) || n > 2_000_000 {
                break;
            }
            last = t;
            n += 1;
        }
        total
    }

    /// Detected-photon distribution `P(n_a, n_b)` for `n_a, n_b ≤ window`.
    pub fn joint_distribution(&self, window: usize) -> Result<JointDistribution> {
        let trunc = self.window_truncation(window)?;
        let c = trunc.source_cutoff;
        let table = ThinningTable::new(c, self.loss.eta());
        let amp0 = self.pdc.tau().cosh().powi(-2);
        let lambda = self.pdc.lambda();
        let mut probs = DMatrix::zeros(window + 1, window + 1);
        for n in 0..=c {
            let cn = (amp0 * lambda.powi(n as i32)).powi(2);
            if cn == 0.0 {
                break;
            }
            // fa[m][d]: probability that arm a keeps d photons given
            // polarisations (n - m, m); arm b holds (m, n - m).
            let lo = n.saturating_sub(window);
            let mut fa = vec![vec![0.0; window + 1]; n + 1];
            let mut fb = vec![vec![0.0; window + 1]; n + 1];
            for m in 0..=n {
                for k_av in 0..=m {
                    let pv = table.get(m, k_av).powi(2);
                    for k_ah in 0..=(n - m) {
                        let lost = k_av + k_ah;
                        if lost < lo {
                            continue;
                        }
                        let p = pv * table.get(n - m, k_ah).powi(2);
                        fa[m][n - lost] += p;
                    }
                }
                // Arm b carries (m, n - m) and so mirrors arm a's split.
                fb[m].clone_from(&fa[m]);
            }
            for m in 0..=n {
                for da in 0..=window.min(n) {
                    let pa = fa[m][da];
                    if pa == 0.0 {
                        continue;
                    }
                    for db in 0..=window.min(n) {
                        probs[(da, db)] += cn * pa * fb[m][db];
                    }
                }
            }
        }
        Ok(JointDistribution {
            probs,
            truncation: trunc,
        })
    }

    /// Conditional density on `(n_a, n_b)`.
    pub fn subspace_density(&self, n_a: u32, n_b: u32) -> Result<SubspaceDensity> {
        let trunc = self.subspace_truncation(n_a, n_b)?;
        let (na, nb) = (n_a as usize, n_b as usize);
        let c = trunc.source_cutoff;
        let table = ThinningTable::new(c, self.loss.eta());
        let amp0 = self.pdc.tau().cosh().powi(-2);
        let lambda = self.pdc.lambda();
        let dim = (na + 1) * (nb + 1);
        let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
        let mut entries: Vec<(usize, Complex64)> = Vec::with_capacity(na.min(nb) + 1);
        for n in na.max(nb)..=c {
            let cn = Complex64::from_polar(amp0 * lambda.powi(n as i32), n as f64 * self.pdc.pump_phase());
            if cn.norm() == 0.0 {
                break;
            }
            for k_av in 0..=(n - na) {
                let k_ah = n - na - k_av;
                for k_bv in 0..=(n - nb) {
                    let k_bh = n - nb - k_bv;
                    entries.clear();
                    let m_lo = k_av.max(k_bh);
                    let m_hi = (n - k_ah).min(n - k_bv);
                    for m in m_lo..=m_hi.max(m_lo) {
                        if m > m_hi {
                            break;
                        }
                        let f = table.get(n - m, k_ah)
                            * table.get(m, k_av)
                            * table.get(m, k_bh)
                            * table.get(n - m, k_bv);
                        if f == 0.0 {
                            continue;
                        }
                        let amp = if m % 2 == 0 { cn * f } else { -cn * f };
                        let ia = (m - k_av) as u32;
                        let ib = (n - m - k_bv) as u32;
                        entries.push((subspace_index(n_b, ia, ib), amp));
                    }
                    accumulate_outer(&mut rho, &entries, 1.0);
                }
            }
        }
        SubspaceDensity::from_unnormalized(n_a, n_b, rho, trunc)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    /// `probs[(n_a, n_b)]`.
    pub probs: DMatrix<f64>,
    pub truncation: Truncation,
}

impl JointDistribution {
    pub fn window(&self) -> usize {
        self.probs.nrows() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.sum()
    }

    /// `Σ P(n_a, n_b)(n_a + n_b)`.
    pub fn mean_detected(&self) -> f64 {
        let mut acc = 0.0;
        for ((a, b), p) in self.probs.iter().enumerate().map(|(i, p)| {
            let n = self.probs.nrows();
            ((i % n, i / n), p)
        }) {
            acc += p * (a + b) as f64;
        }
        acc
    }
}

/// `C(n, k) η^k (1-η)^{n-k}`.
pub(crate) fn binomial_pmf(k: usize, n: usize, eta: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if eta == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if eta == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let mut p = (1.0 - eta).powi(n as i32);
    let odds = eta / (1.0 - eta);
    for i in 0..k {
        p *= (n - i) as f64 / (i + 1) as f64 * odds;
    }
    p
}

fn binomial_cdf(k: usize, n: usize, eta: f64) -> f64 {
    (0..=k.min(n)).map(|i| binomial_pmf(i, n, eta)).sum::<f64>().min(1.0)
}

/// Result of the brute-force evaluation of the lossy ensemble QFI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericQfi {
    pub value: f64,
    /// Contributions of `a_h a_v`, `a_h† a_v†`, `b_v b_h`, `b_v† b_h†`.
    pub components: [f64; 4],
    /// Per-mode occupation cutoff of the thermal eigenbasis.
    pub cutoff: usize,
    /// Bound on the neglected part of the sum.
    pub tail: f64,
}

/// QFI of the lossy PDC state, summed directly over the eigenbasis of the
/// squeezed thermal state.
///
/// With `ρ = S ρ_th^{⊗4} S†`, eigenvalues `p_A = χ^{ΣA}/(1+N̄)⁴` on squeezed
/// occupation states `S|A⟩`, the generator transforms to
/// `sinh(2τ_eff)/4 · T` plus a part diagonal in the eigenbasis, with
/// `T = -a_h a_v + b_v b_h + a_h† a_v† - b_v† b_h†`. Each pair `(A, A')` is
/// connected by at most one term of `T`.
pub fn total_lossy_qfi_numeric(
    pdc: &PdcParams,
    loss: &LossParams,
    cutoff: usize,
    tolerance: f64,
) -> Result<NumericQfi> {
    ensure_finite("tolerance", tolerance)?;
    let g = effective_params(pdc, loss);
    let pref = 2.0 * (2.0 * g.tau_eff).sinh().powi(2) / 16.0;
    let tail = numeric_qfi_tail(pref, g.chi, cutoff);
    if tail > tolerance {
        return Err(Error::InsufficientCutoff {
            cutoff,
            tail,
            allowed: tolerance,
        });
    }
    let k = cutoff;
    let norm = (1.0 + g.n_bar).powi(-4);
    let powers: Vec<f64> = (0..=4 * k + 4).map(|e| g.chi.powi(e as i32)).collect();
    let p = |s: usize| norm * powers[s];
    let term = |pa: f64, pb: f64, elt: f64| {
        let s = pa + pb;
        if s > 0.0 {
            (pa - pb).powi(2) / s * elt
        } else {
            0.0
        }
    };
    let mut comp = [0.0; 4];
    for a0 in 0..=k {
        for a1 in 0..=k {
            for b0 in 0..=k {
                for b1 in 0..=k {
                    let s = a0 + a1 + b0 + b1;
                    let pa = p(s);
                    // Lowering pairs: a_h a_v and b_v b_h take s to s - 2.
                    if a0 > 0 && a1 > 0 {
                        comp[0] += term(pa, p(s - 2), (a0 * a1) as f64);
                    }
                    if b0 > 0 && b1 > 0 {
                        comp[2] += term(pa, p(s - 2), (b0 * b1) as f64);
                    }
                    // Raising pairs stay inside the box only below the cutoff.
                    if a0 < k && a1 < k {
                        comp[1] += term(pa, p(s + 2), ((a0 + 1) * (a1 + 1)) as f64);
                    }
                    if b0 < k && b1 < k {
                        comp[3] += term(pa, p(s + 2), ((b0 + 1) * (b1 + 1)) as f64);
                    }
                }
            }
        }
    }
    let components = comp.map(|c| pref * c);
    Ok(NumericQfi {
        value: components.iter().sum(),
        components,
        cutoff,
        tail,
    })
}

/// Bound on the part of the sum involving an occupation above `cutoff`.
///
/// Every term is at most `(p_A + p_A')·elt` and `elt ≤ (K+2)²` near the box
/// edge; the thermal mass with some mode above `K` is `1 - (1-χ^{K+1})⁴`. The
/// polynomial growth of `elt` beyond the edge is covered by summing
/// `(n+2)² χ^n` in closed form over `n > K`.
fn numeric_qfi_tail(pref: f64, chi: f64, cutoff: usize) -> f64 {
    if chi == 0.0 {
        return 0.0;
    }
    let k = cutoff as f64;
    // Σ_{n>K} (n+2)² χ^n (1-χ), bounded by a geometric series of the first term.
    let first = (k + 3.0).powi(2) * chi.powf(k + 1.0) * (1.0 - chi);
    let ratio = chi * ((k + 4.0) / (k + 3.0)).powi(2);
    let edge = if ratio < 1.0 { first / (1.0 - ratio) } else { f64::INFINITY };
    // Four modes, two terms per mode pair, both orderings of each pair.
    2.0 * pref * 4.0 * 2.0 * edge * (k + 2.0)
}

/// Smallest cutoff for which [`total_lossy_qfi_numeric`] meets `tolerance`.
pub fn numeric_qfi_cutoff(pdc: &PdcParams, loss: &LossParams, tolerance: f64) -> usize {
    let g = effective_params(pdc, loss);
    let pref = 2.0 * (2.0 * g.tau_eff).sinh().powi(2) / 16.0;
    let mut k = 1;
    while numeric_qfi_tail(pref, g.chi, k) > tolerance && k < 4096 {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss_model::{lossy_qfi, LossParams};
    use crate::pdc_source::singlet_weights;
    use crate::singlet_probe::outcome_distribution;
    use approx::assert_abs_diff_eq;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    /// `J_yb ψ = (J_+ - J_-)ψ / 2i` with `J_+ = b_h† b_v`, built from the
    /// bosonic operators.
    fn apply_jy_b(v: &FockVector) -> FockVector {
        let plus = v.lower(Mode::BV).raise(Mode::BH);
        let minus = v.lower(Mode::BH).raise(Mode::BV);
        let mut out = FockVector::new(v.cutoff());
        let k = Complex64::new(0.0, -0.5);
        for (o, a) in plus.amplitudes() {
            out.add(*o, *a * k).unwrap();
        }
        for (o, a) in minus.amplitudes() {
            out.add(*o, -*a * k).unwrap();
        }
        out
    }

    /// Rotation of a single b-sector by the matrix exponential of `-iφJ_yb`
    /// assembled from bosonic matrix elements.
    fn rotate_by_exponential(v: &FockVector, phi: f64) -> FockVector {
        let basis: Vec<Occupation> = {
            let mut set: Vec<Occupation> = Vec::new();
            for o in v.amplitudes().keys() {
                let nb = o[2] + o[3];
                for nbv in 0..=nb {
                    let occ = [o[0], o[1], nb - nbv, nbv];
                    if !set.contains(&occ) {
                        set.push(occ);
                    }
                }
            }
            set
        };
        let n = basis.len();
        let mut h = DMatrix::<Complex64>::zeros(n, n);
        for (col, occ) in basis.iter().enumerate() {
            let image = apply_jy_b(&FockVector::basis(*occ, 64).unwrap());
            for (row, o) in basis.iter().enumerate() {
                h[(row, col)] = image.amplitude(o);
            }
        }
        let u = (h * Complex64::new(0.0, -phi)).exp();
        let x = DVector::from_iterator(n, basis.iter().map(|o| v.amplitude(o)));
        let y = u * x;
        let mut out = FockVector::new(v.cutoff());
        for (i, o) in basis.iter().enumerate() {
            out.add(*o, y[i]).unwrap();
        }
        out
    }

    fn assert_vectors_close(a: &FockVector, b: &FockVector, tol: f64) {
        let mut keys: Vec<&Occupation> = a.amplitudes().keys().collect();
        keys.extend(b.amplitudes().keys());
        for k in keys {
            let d = (a.amplitude(k) - b.amplitude(k)).norm();
            assert!(d < tol, "{k:?}: {} vs {}", a.amplitude(k), b.amplitude(k));
        }
    }

    /// Binomial pmf from a log-factorial table.
    fn binom_oracle(lf: &[f64], k: usize, n: usize, eta: f64) -> f64 {
        if k > n {
            return 0.0;
        }
        (lf[n] - lf[k] - lf[n - k] + k as f64 * eta.ln() + (n - k) as f64 * (1.0 - eta).ln()).exp()
    }

    fn thinning_oracle(tau: f64, eta: f64, na: usize, nb: usize, max_n: usize) -> f64 {
        let mut lf = vec![0.0; max_n + 1];
        for i in 1..=max_n {
            lf[i] = lf[i - 1] + (i as f64).ln();
        }
        let w = singlet_weights(&PdcParams::new(tau).unwrap(), max_n);
        (0..=max_n)
            .map(|n| w.weights[n] * binom_oracle(&lf, na, n, eta) * binom_oracle(&lf, nb, n, eta))
            .sum()
    }

    #[test]
    fn vacuum_state() {
        let v = build_pdc_state(&PdcParams::new(0.0).unwrap(), 4).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.amplitude(&[0, 0, 0, 0]), c(1.0));
    }

    #[test]
    fn one_pair_component() {
        let v = build_pdc_state(&PdcParams::new(0.5).unwrap(), 3).unwrap();
        let x = v.amplitude(&[1, 0, 0, 1]);
        let y = v.amplitude(&[0, 1, 1, 0]);
        assert_abs_diff_eq!((x + y).norm(), 0.0, epsilon = 1e-15);
        assert!(x.norm() > 0.0);
        for (occ, _) in v.amplitudes() {
            assert_eq!((occ[0], occ[1]), (occ[3], occ[2]));
        }
    }

    #[test]
    fn pdc_photon_moment() {
        let pdc = PdcParams::new(0.8).unwrap();
        let v = build_pdc_state(&pdc, 12).unwrap();
        assert_abs_diff_eq!(v.norm_sqr(), 1.0 - v.tail(), epsilon = 1e-14);
        let missing: f64 = (13..2000).map(|n| 2.0 * n as f64 * pdc.pair_weight(n)).sum();
        assert_abs_diff_eq!(v.photon_number_moment() + missing, 4.0 * 0.8f64.sinh().powi(2), epsilon = 1e-12);
    }

    #[test]
    fn rejects_short_cutoff() {
        let err = build_pdc_state(&PdcParams::new(1.83).unwrap(), 16).unwrap_err();
        assert!(matches!(err, Error::InsufficientCutoff { .. }));
    }

    #[test]
    fn singlet_matches_pdc_sector() {
        let pdc = PdcParams::new(0.6).unwrap();
        let v = build_pdc_state(&pdc, 6).unwrap();
        for twice in 0..=6 {
            let j = HalfInt::from_twice(twice);
            let s = singlet_state(j).unwrap();
            let sector = v.project(twice as u32, twice as u32);
            let overlap = s.inner(&sector).norm_sqr();
            assert_abs_diff_eq!(overlap, sector.norm_sqr(), epsilon = 1e-14);
        }
    }

    #[test]
    fn loss_identity_and_single_photon() {
        let v = build_pdc_state(&PdcParams::new(0.4).unwrap(), 5).unwrap();
        let e = apply_loss(&v, &LossParams::LOSSLESS);
        assert_eq!(e.branches.len(), 1);
        assert_abs_diff_eq!(e.branches[0].weight, v.norm_sqr(), epsilon = 1e-15);

        let one = FockVector::basis([0, 0, 1, 0], 1).unwrap();
        let e = apply_loss(&one, &LossParams::new(0.3).unwrap());
        assert_eq!(e.branches.len(), 2);
        let kept = e.branches.iter().find(|b| b.losses == [0; 4]).unwrap();
        let lost = e.branches.iter().find(|b| b.losses == [0, 0, 1, 0]).unwrap();
        assert_abs_diff_eq!(kept.weight, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(lost.weight, 0.7, epsilon = 1e-15);
        assert_eq!(lost.state.amplitude(&[0; 4]), c(1.0));
    }

    #[test]
    fn loss_conserves_probability_and_thins() {
        let pdc = PdcParams::new(0.7).unwrap();
        let v = build_pdc_state(&pdc, 10).unwrap();
        let eta = 0.5;
        let e = apply_loss(&v, &LossParams::new(eta).unwrap());
        assert_abs_diff_eq!(e.total_weight() + e.pruned, 1.0 - v.tail(), epsilon = 1e-13);
        let p = e.joint_distribution();
        for na in 0..=10 {
            for nb in 0..=10 {
                let expect = thinning_oracle(0.7, eta, na, nb, 10);
                assert_abs_diff_eq!(p[(na, nb)], expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rotation_identity_and_spin_half() {
        let v = build_pdc_state(&PdcParams::new(0.5).unwrap(), 4).unwrap();
        assert_vectors_close(&v.rotate_b(0.0).unwrap(), &v, 1e-14);

        let phi: f64 = 0.83;
        let mut x = FockVector::new(1);
        x.add([0, 0, 1, 0], c(0.6)).unwrap();
        x.add([0, 0, 0, 1], Complex64::new(0.0, 0.8)).unwrap();
        let y = x.rotate_b(phi).unwrap();
        let (s, co) = (phi / 2.0).sin_cos();
        // d^{1/2} = [[cos, -sin], [sin, cos]] with index 0 = m = +1/2 = b_h.
        let up = c(co) * c(0.6) - c(s) * Complex64::new(0.0, 0.8);
        let down = c(s) * c(0.6) + c(co) * Complex64::new(0.0, 0.8);
        assert_abs_diff_eq!((y.amplitude(&[0, 0, 1, 0]) - up).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((y.amplitude(&[0, 0, 0, 1]) - down).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rotation_matches_matrix_exponential() {
        let v = build_pdc_state(&PdcParams::with_pump_phase(0.5, 0.3).unwrap(), 5).unwrap();
        for phi in [0.2, 1.1, 2.9, -0.7] {
            assert_vectors_close(&v.rotate_b(phi).unwrap(), &rotate_by_exponential(&v, phi), 1e-12);
        }
    }

    #[test]
    fn lossless_distribution_matches_probe() {
        for twice in 0..=6 {
            let j = HalfInt::from_twice(twice);
            let e = BranchEnsemble::pure(singlet_state(j).unwrap());
            let rho = e.subspace_density(twice as u32, twice as u32).unwrap();
            for k in 0..12 {
                let phi = 0.05 + 0.26 * k as f64;
                let p = rho.outcome_distribution(phi).unwrap();
                let q = outcome_distribution(j, phi).unwrap();
                assert!((p - q.probs()).amax() < 1e-10, "2j={twice} phi={phi}");
            }
        }
    }

    #[test]
    fn loss_commutes_with_rotation() {
        let v = build_pdc_state(&PdcParams::new(0.6).unwrap(), 6).unwrap();
        let loss = LossParams::new(0.65).unwrap();
        let phi = 0.9;
        let a = apply_loss(&v, &loss).rotate_b(phi).unwrap();
        let b = apply_loss(&v.rotate_b(phi).unwrap(), &loss);
        let (pa, pb) = (a.occupation_distribution(), b.occupation_distribution());
        for (k, x) in &pa {
            assert!((x - pb.get(k).copied().unwrap_or(0.0)).abs() < 1e-12, "{k:?}");
        }
        for (na, nb) in [(2, 3), (4, 4), (1, 0)] {
            let ra = a.subspace_density(na, nb).unwrap();
            let rb = b.subspace_density(na, nb).unwrap();
            assert!((&ra.matrix - &rb.matrix).camax() < 1e-12);
        }
    }

    #[test]
    fn streamed_matches_ensemble() {
        let pdc = PdcParams::with_pump_phase(0.5, 0.4).unwrap();
        let loss = LossParams::new(0.7).unwrap();
        let e = apply_loss(&build_pdc_state(&pdc, 14).unwrap(), &loss);
        let s = LossyPdc::new(pdc, loss);
        for (na, nb) in [(0, 0), (2, 1), (3, 3), (4, 2)] {
            let a = e.subspace_density(na, nb).unwrap();
            let b = s.subspace_density(na, nb).unwrap();
            assert!((&a.matrix - &b.matrix).camax() < 1e-6, "{na},{nb}");
            assert!((a.weight - b.weight).abs() < 1e-6);
        }
    }

    #[test]
    fn lossless_subspaces() {
        let s = LossyPdc::new(PdcParams::new(1.0).unwrap(), LossParams::LOSSLESS);
        let p = s.joint_distribution(6).unwrap();
        for na in 0..=6 {
            for nb in 0..=6 {
                if na != nb {
                    assert_eq!(p.probs[(na, nb)], 0.0);
                }
            }
        }
        assert!(matches!(s.subspace_density(2, 3), Err(Error::EmptySubspace { .. })));
        let rho = s.subspace_density(4, 4).unwrap();
        let singlet = BranchEnsemble::pure(singlet_state(HalfInt::from_int(2)).unwrap())
            .subspace_density(4, 4)
            .unwrap();
        assert!((&rho.matrix - &singlet.matrix).camax() < 1e-14);
        assert_abs_diff_eq!(rho.qfi().unwrap(), 8.0, epsilon = 1e-10);
        for phi in [0.0, 0.3, 1.4, 3.0] {
            assert_abs_diff_eq!(rho.cfi(phi).unwrap(), 8.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn joint_distribution_matches_thinning() {
        let (tau, eta) = (1.83, 0.75);
        let s = LossyPdc::new(PdcParams::new(tau).unwrap(), LossParams::new(eta).unwrap());
        let p = s.joint_distribution(16).unwrap();
        assert!(p.truncation.tail < 1e-12);
        for na in 0..=16 {
            for nb in 0..=16 {
                let expect = thinning_oracle(tau, eta, na, nb, 3000);
                assert_abs_diff_eq!(p.probs[(na, nb)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn energy_bookkeeping() {
        let pdc = PdcParams::new(0.6).unwrap();
        let loss = LossParams::new(0.8).unwrap();
        let p = LossyPdc::new(pdc, loss).joint_distribution(60).unwrap();
        assert_abs_diff_eq!(p.total(), 1.0, epsilon = 1e-11);
        let flux = 4.0 * 0.8 * 0.6f64.sinh().powi(2);
        assert_abs_diff_eq!(p.mean_detected(), flux, epsilon = 1e-9);
    }

    #[test]
    fn cfi_matches_finite_difference() {
        let s = LossyPdc::new(PdcParams::new(1.0).unwrap(), LossParams::new(0.7).unwrap());
        for (na, nb) in [(4, 4), (2, 3), (3, 1)] {
            let rho = s.subspace_density(na, nb).unwrap();
            for phi in [0.3, 0.9, 2.2] {
                let h = 1e-5;
                let plus = rho.outcome_distribution(phi + h).unwrap();
                let minus = rho.outcome_distribution(phi - h).unwrap();
                let mid = rho.outcome_distribution(phi).unwrap();
                let fd: f64 = mid
                    .iter()
                    .zip(plus.iter().zip(minus.iter()))
                    .filter(|(p, _)| **p > 1e-12)
                    .map(|(p, (a, b))| ((a - b) / (2.0 * h)).powi(2) / p)
                    .sum();
                let exact = rho.cfi(phi).unwrap();
                assert!((fd - exact).abs() < 1e-5, "{na},{nb} φ={phi}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn qfi_bounds_cfi_and_vanishes_when_mixed() {
        let s = LossyPdc::new(PdcParams::new(1.0).unwrap(), LossParams::new(0.75).unwrap());
        let rho = s.subspace_density(4, 4).unwrap();
        let (_, best) = rho.max_cfi_over_phi(181).unwrap();
        assert!(rho.qfi().unwrap() >= best - 1e-9);

        let dim = 15;
        let mixed = SubspaceDensity::from_unnormalized(
            2,
            4,
            DMatrix::from_diagonal_element(dim, dim, c(1.0)),
            Truncation {
                source_cutoff: 0,
                tail: 0.0,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(mixed.qfi().unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn blocks_of_pure_singlet() {
        let rho = LossyPdc::new(PdcParams::new(1.0).unwrap(), LossParams::LOSSLESS)
            .subspace_density(3, 3)
            .unwrap();
        let b = block_decomposition(&rho).unwrap();
        assert_abs_diff_eq!(b.mu(HalfInt::ZERO), 1.0, epsilon = 1e-12);
        for blk in &b.blocks {
            if blk.j != HalfInt::ZERO {
                assert!(blk.mu.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn numeric_qfi_examples() {
        let pdc = PdcParams::new(1f64.asinh()).unwrap();
        let q = total_lossy_qfi_numeric(&pdc, &LossParams::LOSSLESS, 2, 1e-12).unwrap();
        assert_abs_diff_eq!(q.value, 4.0, epsilon = 1e-8);
        let zero = total_lossy_qfi_numeric(&PdcParams::new(0.0).unwrap(), &LossParams::new(0.4).unwrap(), 2, 1e-12)
            .unwrap();
        assert_eq!(zero.value, 0.0);

        let pdc = PdcParams::new(0.7).unwrap();
        let loss = LossParams::new(0.8).unwrap();
        let k = numeric_qfi_cutoff(&pdc, &loss, 1e-9);
        let q = total_lossy_qfi_numeric(&pdc, &loss, k, 1e-9).unwrap();
        assert!(q.tail < 1e-9);
        assert_abs_diff_eq!(q.value, lossy_qfi(&pdc, &loss).unwrap(), epsilon = 1e-6);
        for c in q.components {
            assert_abs_diff_eq!(c, q.value / 4.0, epsilon = 1e-6);
        }
        assert!(total_lossy_qfi_numeric(&pdc, &loss, 1, 1e-9).is_err());
    }

    #[test]
    fn theta_sufficiency() {
        for theta in [0.05, 0.2, 0.35] {
            let a = LossyPdc::new(
                PdcParams::new(1.0).unwrap(),
                LossParams::new(crate::loss_model::eta_for_theta(1.0, theta).unwrap()).unwrap(),
            );
            let b = LossyPdc::new(
                PdcParams::new(1.83).unwrap(),
                LossParams::new(crate::loss_model::eta_for_theta(1.83, theta).unwrap()).unwrap(),
            );
            let d = a
                .subspace_density(4, 4)
                .unwrap()
                .trace_distance(&b.subspace_density(4, 4).unwrap())
                .unwrap();
            assert!(d < 1e-8, "θ={theta}: {d}");
        }
    }

    #[test]
    fn cfi_through_full_ensemble() {
        // θ = 0.2 reached at τ = 0.5, evaluated from the four-mode ensemble by
        // finite differences of the photon-counting distribution.
        let tau = 0.5;
        let eta = crate::loss_model::eta_for_theta(tau, 0.2).unwrap();
        let pdc = PdcParams::new(tau).unwrap();
        let loss = LossParams::new(eta).unwrap();
        let e = apply_loss(&build_pdc_state(&pdc, 14).unwrap(), &loss);
        let dist = |phi: f64| -> BTreeMap<Occupation, f64> {
            let mut d = e.rotate_b(phi).unwrap().occupation_distribution();
            d.retain(|o, _| arm_numbers(o) == (4, 4));
            let total: f64 = d.values().sum();
            d.values_mut().for_each(|p| *p /= total);
            d
        };
        let rho = LossyPdc::new(pdc, loss).subspace_density(4, 4).unwrap();
        for phi in [0.6, 1.3] {
            let h = 1e-5;
            let (mid, plus, minus) = (dist(phi), dist(phi + h), dist(phi - h));
            let fd: f64 = mid
                .iter()
                .filter(|(_, p)| **p > 1e-12)
                .map(|(o, p)| {
                    let dp = (plus.get(o).copied().unwrap_or(0.0) - minus.get(o).copied().unwrap_or(0.0)) / (2.0 * h);
                    dp * dp / p
                })
                .sum();
            assert!((fd - rho.cfi(phi).unwrap()).abs() < 1e-5, "{fd}");
        }
    }

    #[test]
    fn block_structure_on_grid() {
        for (tau, eta) in [(1.0, 0.6), (0.4, 0.9), (1.5, 0.3)] {
            let s = LossyPdc::new(PdcParams::new(tau).unwrap(), LossParams::new(eta).unwrap());
            for na in 0..=5 {
                for nb in 0..=5 {
                    let b = block_decomposition(&s.subspace_density(na, nb).unwrap()).unwrap();
                    assert!((b.total_mu() - 1.0).abs() < 1e-10);
                    assert!(b.off_block_residual < 1e-10);
                    assert!(b.blocks.iter().all(|x| x.identity_deviation < 1e-10 && x.mu > -1e-12));
                }
            }
        }
    }

    fn spin_matrices(j: HalfInt) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let n = j.dim();
        let mut jz = DMatrix::zeros(n, n);
        let mut jp = DMatrix::zeros(n, n);
        for i in 0..n {
            let m = j.projection_at(i);
            jz[(i, i)] = c(m.value());
            if i > 0 {
                jp[(i - 1, i)] = c(crate::angular::ladder_coeff(j, m, true).unwrap());
            }
        }
        (jz, jp)
    }

    /// `D^j(α, β, γ) = e^{-iαJ_z} d^j(β) e^{-iγJ_z}`.
    fn wigner_big_d(j: HalfInt, alpha: f64, beta: f64, gamma: f64) -> DMatrix<Complex64> {
        let d = crate::angular::wigner_d(j, beta).unwrap();
        DMatrix::from_fn(j.dim(), j.dim(), |r, col| {
            let (mp, m) = (j.projection_at(r).value(), j.projection_at(col).value());
            Complex64::from_polar(d.entries()[(r, col)], -alpha * mp - gamma * m)
        })
    }

    #[test]
    fn twirl_oracle_for_block_weights() {
        use rand::{Rng, SeedableRng};
        let s = LossyPdc::new(PdcParams::new(1.0).unwrap(), LossParams::new(0.6).unwrap());
        let rho = s.subspace_density(2, 4).unwrap();
        let (ja, jb) = (rho.j_a(), rho.j_b());
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let mut twirled = DMatrix::<Complex64>::zeros(rho.dim(), rho.dim());
        let samples = 10_000;
        for _ in 0..samples {
            let alpha = rng.random::<f64>() * std::f64::consts::TAU;
            let gamma = rng.random::<f64>() * std::f64::consts::TAU;
            let beta = (1.0 - 2.0 * rng.random::<f64>()).acos();
            let u = wigner_big_d(ja, alpha, beta, gamma).kronecker(&wigner_big_d(jb, alpha, beta, gamma));
            twirled += &u * &rho.matrix * u.adjoint();
        }
        twirled /= c(samples as f64);

        // Total-spin projectors from J², assembled without coupling coefficients.
        let (za, pa) = spin_matrices(ja);
        let (zb, pb) = spin_matrices(jb);
        let (ia, ib) = (DMatrix::<Complex64>::identity(ja.dim(), ja.dim()), DMatrix::identity(jb.dim(), jb.dim()));
        let jz = za.kronecker(&ib) + ia.kronecker(&zb);
        let jp = pa.kronecker(&ib) + ia.kronecker(&pb);
        let j2 = &jp * jp.adjoint() + &jz * &jz - &jz;
        let totals: Vec<f64> = (1..=3).map(|t| t as f64).collect();
        let n = rho.dim();
        let blocks = block_decomposition(&rho).unwrap();
        let mut rebuilt = DMatrix::<Complex64>::zeros(n, n);
        for &big_j in &totals {
            let mut proj = DMatrix::<Complex64>::identity(n, n);
            for &other in &totals {
                if other != big_j {
                    let shift = DMatrix::from_diagonal_element(n, n, c(other * (other + 1.0)));
                    proj = proj * (&j2 - shift) / c(big_j * (big_j + 1.0) - other * (other + 1.0));
                }
            }
            let mu = (&proj * &twirled).trace().re;
            let label = HalfInt::from_int(big_j as i32);
            assert!((mu - blocks.mu(label)).abs() < 1e-9, "J={big_j}: {mu} vs {}", blocks.mu(label));
            rebuilt += proj * c(mu / (2.0 * big_j + 1.0));
        }
        assert!((&twirled - &rebuilt).camax() < 1e-9);
        assert!((&twirled - &rho.matrix).camax() < 1e-9);
    }

    #[test]
    fn post_selection_never_exceeds_total_qfi() {
        for (tau, eta) in [(0.5, 1.0), (0.5, 0.8), (0.8, 0.5)] {
            let pdc = PdcParams::new(tau).unwrap();
            let loss = LossParams::new(eta).unwrap();
            let s = LossyPdc::new(pdc, loss);
            let joint = s.joint_distribution(12).unwrap();
            let mut weighted = 0.0;
            for na in 0..=12 {
                for nb in 0..=12 {
                    if joint.probs[(na, nb)] > 0.0 {
                        let r = s.subspace_density(na as u32, nb as u32).unwrap();
                        weighted += r.weight * r.qfi().unwrap();
                    }
                }
            }
            let total = lossy_qfi(&pdc, &loss).unwrap();
            assert!(weighted <= total + 1e-12, "{weighted} > {total}");
            if eta == 1.0 {
                // Only the neglected sectors above the window are missing.
                let missing: f64 = (13..400)
                    .map(|n| pdc.pair_weight(n) * crate::singlet_probe::quantum_fisher_pure(HalfInt::from_twice(n as i32)).unwrap())
                    .sum();
                assert_abs_diff_eq!(weighted + missing, total, epsilon = 1e-10);
            }
        }
    }
}
