//! SU(2) special functions: half-integer labels, Wigner small-d matrices,
//! ladder coefficients and Clebsch-Gordan coefficients.
//!
//! Every matrix over a spin-`j` multiplet uses the same index convention:
//! row/column `i` holds the projection `m = j - i`, so index 0 is `m = +j` and
//! index `2j` is `m = -j`.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// A spin quantum number or projection, stored as twice its value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);
    pub const ONE: HalfInt = HalfInt(2);

    #[inline]
    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    #[inline]
    pub const fn from_int(n: i32) -> Self {
        HalfInt(2 * n)
    }

    #[inline]
    pub const fn twice(self) -> i32 {
        self.0
    }

    #[inline]
    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    #[inline]
    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Multiplet dimension `2j + 1`. Only meaningful for a spin label.
    #[inline]
    pub fn dim(self) -> usize {
        debug_assert!(self.0 >= 0);
        self.0 as usize + 1
    }

    /// `j(j + 1)` as a float.
    #[inline]
    pub fn casimir(self) -> f64 {
        let j = self.value();
        j * (j + 1.0)
    }

    /// Projections `+j, j-1, ..., -j` in index order.
    pub fn projections(self) -> impl Iterator<Item = HalfInt> {
        let n = if self.0 >= 0 { self.0 as usize + 1 } else { 0 };
        (0..n).map(move |i| self.projection_at(i))
    }

    /// Index of projection `m` inside the spin-`self` multiplet.
    #[inline]
    pub fn index_of(self, m: HalfInt) -> usize {
        ((self.0 - m.0) / 2) as usize
    }

    /// Projection stored at index `i` of the spin-`self` multiplet.
    #[inline]
    pub fn projection_at(self, i: usize) -> HalfInt {
        HalfInt(self.0 - 2 * i as i32)
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Accepts `"3"`, `"-2"`, `"5/2"`, `"-1/2"` and decimal forms such as `"1.5"`.
impl FromStr for HalfInt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ParseHalfInt(s.to_string());
        let s_trim = s.trim();
        if let Some((num, den)) = s_trim.split_once('/') {
            let num: i32 = num.trim().parse().map_err(|_| bad())?;
            match den.trim() {
                "1" => Ok(HalfInt(2 * num)),
                "2" => Ok(HalfInt(num)),
                _ => Err(bad()),
            }
        } else if let Ok(n) = s_trim.parse::<i32>() {
            Ok(HalfInt(2 * n))
        } else {
            let x: f64 = s_trim.parse().map_err(|_| bad())?;
            let twice = (2.0 * x).round();
            if (2.0 * x - twice).abs() > 1e-9 || twice.abs() > f64::from(i32::MAX) {
                return Err(bad());
            }
            Ok(HalfInt(twice as i32))
        }
    }
}

pub(crate) fn check_spin(j: HalfInt) -> Result<()> {
    if j.0 < 0 {
        Err(Error::NegativeSpin { twice: j.0 })
    } else {
        Ok(())
    }
}

pub(crate) fn check_projection(j: HalfInt, m: HalfInt) -> Result<()> {
    check_spin(j)?;
    if m.0.abs() > j.0 || (j.0 - m.0) % 2 != 0 {
        Err(Error::InvalidProjection {
            twice_j: j.0,
            twice_m: m.0,
        })
    } else {
        Ok(())
    }
}

/// `sqrt(j(j+1) - m(m ± 1))`, the matrix element of `J_±` on `|j, m⟩`.
///
/// `raising = true` selects `J_+`. Off the edge of the ladder the value is 0.
pub fn ladder_coeff(j: HalfInt, m: HalfInt, raising: bool) -> Result<f64> {
    check_projection(j, m)?;
    Ok(ladder_unchecked(j, m, raising))
}

#[inline]
pub(crate) fn ladder_unchecked(j: HalfInt, m: HalfInt, raising: bool) -> f64 {
    // (j ∓ m)(j ± m + 1) in doubled units, divided by 4.
    let (tj, tm) = (i64::from(j.0), i64::from(m.0));
    let prod = if raising {
        (tj - tm) * (tj + tm + 2)
    } else {
        (tj + tm) * (tj - tm + 2)
    };
    if prod <= 0 {
        0.0
    } else {
        (prod as f64).sqrt() / 2.0
    }
}

/// Real antisymmetric generator `-i J_y = (J_- - J_+)/2` of the spin-`j`
/// multiplet, so that `d(φ) = exp(φ G)` and `d'(φ) = G d(φ)`.
pub fn rotation_generator(j: HalfInt) -> Result<DMatrix<f64>> {
    check_spin(j)?;
    let n = j.dim();
    let mut g = DMatrix::zeros(n, n);
    for i in 1..n {
        // Row i-1 has m + 1 relative to row i.
        let m = j.projection_at(i);
        let up = ladder_unchecked(j, m, true) / 2.0;
        // (J_+)_{i-1, i} = up, (J_-)_{i, i-1} = up.
        g[(i - 1, i)] = -up;
        g[(i, i - 1)] = up;
    }
    Ok(g)
}

/// Spectral representation of rotations about the y axis for one spin.
///
/// `J_y` is unitarily equivalent to the real symmetric tridiagonal `J_x`
/// through a diagonal phase. Diagonalising `J_x` once gives every
/// `d^j(φ)` in closed form:
///
/// ```text
/// d_{m'm}(φ) = Σ_k V_{m'k} V_{mk} cos(φ λ_k + π(m' - m)/2)
/// ```
///
/// with the exact eigenvalues `λ_k ∈ {-j, ..., j}` substituted for the
/// numerical ones. This stays accurate for large `j`, where the factorial
/// sum loses all precision.
#[derive(Clone, Debug)]
pub struct YRotation {
    j: HalfInt,
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl YRotation {
    pub fn new(j: HalfInt) -> Result<Self> {
        check_spin(j)?;
        let n = j.dim();
        let mut jx = DMatrix::zeros(n, n);
        for i in 1..n {
            let m = j.projection_at(i);
            let c = ladder_unchecked(j, m, true) / 2.0;
            jx[(i - 1, i)] = c;
            jx[(i, i - 1)] = c;
        }
        let eig = SymmetricEigen::new(jx);
        // The spectrum is exactly {-j, ..., j}; snap to it.
        let eigenvalues = eig
            .eigenvalues
            .iter()
            .map(|&l| (2.0 * l).round() / 2.0)
            .collect();
        Ok(YRotation {
            j,
            vectors: eig.eigenvectors,
            eigenvalues,
        })
    }

    #[inline]
    pub fn j(&self) -> HalfInt {
        self.j
    }

    /// Phase factors `cos(φλ_k)` and `sin(φλ_k)`.
    fn trig(&self, phi: f64) -> (Vec<f64>, Vec<f64>) {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let (s, c) = (phi * l).sin_cos();
                (c, s)
            })
            .unzip()
    }

    fn entry_with(&self, row: usize, col: usize, cos: &[f64], sin: &[f64]) -> f64 {
        // cos(a + πq/2) for q = m' - m = col - row.
        let q = (col as i64 - row as i64).rem_euclid(4);
        let mut acc = 0.0;
        for k in 0..cos.len() {
            let phase = match q {
                0 => cos[k],
                1 => -sin[k],
                2 => -cos[k],
                _ => sin[k],
            };
            acc += self.vectors[(row, k)] * self.vectors[(col, k)] * phase;
        }
        acc
    }

    /// Single entry `d_{m'm}(φ)` addressed by multiplet indices.
    pub fn entry(&self, row: usize, col: usize, phi: f64) -> f64 {
        let (c, s) = self.trig(phi);
        self.entry_with(row, col, &c, &s)
    }

    /// Full matrix `d^j(φ)`.
    pub fn matrix(&self, phi: f64) -> Result<WignerSmallD> {
        ensure_finite("phi", phi)?;
        let n = self.j.dim();
        let (c, s) = self.trig(phi);
        let entries = DMatrix::from_fn(n, n, |r, col| self.entry_with(r, col, &c, &s));
        Ok(WignerSmallD {
            j: self.j,
            phi,
            entries,
        })
    }
}

/// The Wigner small-d matrix `d^j(φ) = exp(-iφJ_y)` in the `J_z` basis.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerSmallD {
    j: HalfInt,
    phi: f64,
    entries: DMatrix<f64>,
}

impl WignerSmallD {
    #[inline]
    pub fn j(&self) -> HalfInt {
        self.j
    }

    #[inline]
    pub fn phi(&self) -> f64 {
        self.phi
    }

    #[inline]
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `d_{m'm}` by projection labels.
    pub fn get(&self, m_prime: HalfInt, m: HalfInt) -> Result<f64> {
        check_projection(self.j, m_prime)?;
        check_projection(self.j, m)?;
        Ok(self.entries[(self.j.index_of(m_prime), self.j.index_of(m))])
    }

    /// `d'_{m'm}(φ)` from the ladder relation
    /// `d' = ½[N_-(m) d_{m',m-1} - N_+(m) d_{m',m+1}]`.
    pub fn derivative(&self) -> DMatrix<f64> {
        let j = self.j;
        let n = j.dim();
        DMatrix::from_fn(n, n, |row, col| {
            let m = j.projection_at(col);
            let mut acc = 0.0;
            // m - 1 sits at col + 1, m + 1 at col - 1.
            if col + 1 < n {
                acc += ladder_unchecked(j, m, false) * self.entries[(row, col + 1)];
            }
            if col > 0 {
                acc -= ladder_unchecked(j, m, true) * self.entries[(row, col - 1)];
            }
            0.5 * acc
        })
    }
}

/// Wigner small-d matrix of spin `j` at angle `phi`.
pub fn wigner_d(j: HalfInt, phi: f64) -> Result<WignerSmallD> {
    ensure_finite("phi", phi)?;
    YRotation::new(j)?.matrix(phi)
}

/// Coefficients of `|J, M⟩` in the product basis `|j1 m1⟩|j2 m2⟩`, as a dense
/// vector indexed `i1 * (2j2+1) + i2`.
fn coupled_states(j1: HalfInt, j2: HalfInt, big_j: HalfInt) -> Vec<Vec<f64>> {
    let (d1, d2) = (j1.dim(), j2.dim());
    let idx = |i1: usize, i2: usize| i1 * d2 + i2;
    let mut top = vec![0.0; d1 * d2];

    // Highest weight: annihilated by J_+, Condon-Shortley sign ⟨j1 j1; j2 J-j1|J J⟩ > 0.
    let mut m1 = j1;
    let mut c = 1.0;
    loop {
        let m2 = big_j - m1;
        if m2.0.abs() > j2.0 || m1.0 < -j1.0 {
            break;
        }
        top[idx(j1.index_of(m1), j2.index_of(m2))] = c;
        let next = m1 - HalfInt::ONE;
        if next.0 < -j1.0 || (big_j - next).0 > j2.0 {
            break;
        }
        c = -c * ladder_unchecked(j2, m2, true) / ladder_unchecked(j1, next, true);
        m1 = next;
    }
    let norm = top.iter().map(|x| x * x).sum::<f64>().sqrt();
    top.iter_mut().for_each(|x| *x /= norm);

    // Lowering amplifies rounding error as M approaches -J, so only the
    // M >= 0 half is lowered and the rest follows from the reflection
    // ⟨j1 -m1; j2 -m2|J -M⟩ = (-1)^{j1+j2-J} ⟨j1 m1; j2 m2|J M⟩.
    let mut states = Vec::with_capacity(big_j.dim());
    states.push(top);
    let mut big_m = big_j;
    while big_m.0 > 1 {
        let prev = states.last().expect("non-empty");
        let mut next = vec![0.0; d1 * d2];
        for i1 in 0..d1 {
            for i2 in 0..d2 {
                let v = prev[idx(i1, i2)];
                if v == 0.0 {
                    continue;
                }
                let (m1, m2) = (j1.projection_at(i1), j2.projection_at(i2));
                if i1 + 1 < d1 {
                    next[idx(i1 + 1, i2)] += v * ladder_unchecked(j1, m1, false);
                }
                if i2 + 1 < d2 {
                    next[idx(i1, i2 + 1)] += v * ladder_unchecked(j2, m2, false);
                }
            }
        }
        let scale = ladder_unchecked(big_j, big_m, false);
        next.iter_mut().for_each(|x| *x /= scale);
        states.push(next);
        big_m = big_m - HalfInt::ONE;
    }
    let sign = if ((j1 + j2 - big_j).twice() / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let n = d1 * d2;
    while states.len() < big_j.dim() {
        let mirror = &states[big_j.dim() - 1 - states.len()];
        let reflected = (0..n).map(|k| sign * mirror[n - 1 - k]).collect();
        states.push(reflected);
    }
    states
}

/// Clebsch-Gordan coefficient `⟨j1 m1; j2 m2 | J M⟩` (Condon-Shortley phase).
///
/// Arguments violating a selection rule give 0; malformed labels are errors.
pub fn clebsch_gordan(
    j1: HalfInt,
    j2: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    big_j: HalfInt,
    big_m: HalfInt,
) -> Result<f64> {
    check_projection(j1, m1)?;
    check_projection(j2, m2)?;
    check_projection(big_j, big_m)?;
    if m1 + m2 != big_m
        || big_j.0 < (j1.0 - j2.0).abs()
        || big_j.0 > j1.0 + j2.0
        || (j1.0 + j2.0 - big_j.0) % 2 != 0
    {
        return Ok(0.0);
    }
    let states = coupled_states(j1, j2, big_j);
    let v = &states[big_j.index_of(big_m)];
    Ok(v[j1.index_of(m1) * j2.dim() + j2.index_of(m2)])
}

/// Orthogonal change of basis from `|j1 m1⟩|j2 m2⟩` to `|J M⟩`.
#[derive(Clone, Debug)]
pub struct CouplingMatrix {
    /// `(J, M)` label of each row: `J` descending from `j1 + j2`, then `M` descending.
    pub labels: Vec<(HalfInt, HalfInt)>,
    /// Row `r`, column `i1 * (2j2+1) + i2` holds `⟨j1 m1; j2 m2 | J M⟩`.
    pub matrix: DMatrix<f64>,
}

pub fn coupling_matrix(j1: HalfInt, j2: HalfInt) -> Result<CouplingMatrix> {
    check_spin(j1)?;
    check_spin(j2)?;
    let dim = j1.dim() * j2.dim();
    let mut labels = Vec::with_capacity(dim);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut big_j = j1 + j2;
    while big_j.0 >= (j1.0 - j2.0).abs() {
        for (k, state) in coupled_states(j1, j2, big_j).into_iter().enumerate() {
            labels.push((big_j, big_j.projection_at(k)));
            rows.push(state);
        }
        big_j = big_j - HalfInt::ONE;
    }
    let matrix = DMatrix::from_fn(dim, dim, |r, c| rows[r][c]);
    Ok(CouplingMatrix { labels, matrix })
}
