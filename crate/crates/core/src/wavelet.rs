//! Periodic orthonormal discrete wavelet transform and sub-band reconstruction.
//!
//! A signal of length `T` is analysed over `L` levels with a periodised
//! two-channel filter bank. Each of the `2L + 1` sub-bands is the inverse
//! transform of a single coefficient set: the original signal (`A0`), the
//! level-`l` approximation (`A1 … AL`) or the level-`l` detail (`D1 … DL`).
//! The details and the deepest approximation add back up to the input.
//!
//! Lengths that are not a multiple of `2^L` are extended by half-sample
//! symmetric reflection before analysis and truncated after synthesis.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

// Daubechies scaling filters, reconstruction low-pass ordering.
const DB2: [f64; 4] = [
    0.482_962_913_144_534_16,
    0.836_516_303_737_807_9,
    0.224_143_868_042_013_4,
    -0.129_409_522_551_260_37,
];

const DB4: [f64; 8] = [
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859854,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
];

/// Orthonormal wavelet families supported by the filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WaveletFamily {
    Haar,
    /// Daubechies with two vanishing moments (4 taps).
    Db2,
    /// Daubechies with four vanishing moments (8 taps).
    #[default]
    Db4,
}

impl WaveletFamily {
    pub fn lowpass(self) -> &'static [f64] {
        const HAAR: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
        match self {
            WaveletFamily::Haar => &HAAR,
            WaveletFamily::Db2 => &DB2,
            WaveletFamily::Db4 => &DB4,
        }
    }

    /// Quadrature mirror of the low-pass filter: `g[n] = (-1)^n h[N-1-n]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n)
            .map(|i| if i % 2 == 0 { h[n - 1 - i] } else { -h[n - 1 - i] })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            WaveletFamily::Haar => "haar",
            WaveletFamily::Db2 => "db2",
            WaveletFamily::Db4 => "db4",
        }
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(WaveletFamily::Haar),
            "db2" => Ok(WaveletFamily::Db2),
            "db4" => Ok(WaveletFamily::Db4),
            other => Err(Error::InvalidArgument(format!(
                "unknown wavelet family {other:?} (expected haar, db2 or db4)"
            ))),
        }
    }
}

/// Identifies one of the `2L + 1` sub-bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subband {
    Original,
    Approx(usize),
    Detail(usize),
}

impl Subband {
    /// Maps a stack index `j ∈ [0, 2L]` onto its sub-band: `0 → A0`,
    /// `1..=L → A_j`, `L+1..=2L → D_{j-L}`.
    pub fn from_index(j: usize, levels: usize) -> Result<Self> {
        match j {
            0 => Ok(Subband::Original),
            j if j <= levels => Ok(Subband::Approx(j)),
            j if j <= 2 * levels => Ok(Subband::Detail(j - levels)),
            _ => Err(Error::SubbandOutOfRange {
                index: j,
                max: 2 * levels,
            }),
        }
    }

    pub fn index(self, levels: usize) -> usize {
        match self {
            Subband::Original => 0,
            Subband::Approx(l) => l,
            Subband::Detail(l) => levels + l,
        }
    }

    pub fn all(levels: usize) -> Vec<Subband> {
        (0..=2 * levels)
            .map(|j| Subband::from_index(j, levels).expect("index in range"))
            .collect()
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subband::Original => f.write_str("A0"),
            Subband::Approx(l) => write!(f, "A{l}"),
            Subband::Detail(l) => write!(f, "D{l}"),
        }
    }
}

impl FromStr for Subband {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed sub-band label {s:?}"));
        let (kind, level) = s.split_at_checked(1).ok_or_else(bad)?;
        let level: usize = level.parse().map_err(|_| bad())?;
        match (kind, level) {
            ("A" | "a", 0) => Ok(Subband::Original),
            ("A" | "a", l) => Ok(Subband::Approx(l)),
            ("D" | "d", l) if l > 0 => Ok(Subband::Detail(l)),
            _ => Err(bad()),
        }
    }
}

/// Largest usable level count for a signal of length `len`: `⌊log2(len)⌋`.
pub fn max_levels(len: usize) -> usize {
    if len == 0 {
        0
    } else {
        (usize::BITS - 1 - len.leading_zeros()) as usize
    }
}

/// Multi-level analysis coefficients of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    /// `approx[l-1]` holds the level-`l` approximation coefficients.
    pub approx: Vec<Vec<f64>>,
    /// `detail[l-1]` holds the level-`l` detail coefficients.
    pub detail: Vec<Vec<f64>>,
    pub original: Vec<f64>,
    pub original_length: usize,
    /// Length after symmetric extension to a multiple of `2^L`.
    pub padded_length: usize,
    pub family: WaveletFamily,
}

impl WaveletCoefficients {
    pub fn levels(&self) -> usize {
        self.detail.len()
    }

    /// Energy of the orthonormal expansion: deepest approximation plus all
    /// details.
    pub fn energy(&self) -> f64 {
        let sq = |v: &Vec<f64>| v.iter().map(|c| c * c).sum::<f64>();
        self.approx.last().map_or(0.0, sq) + self.detail.iter().map(sq).sum::<f64>()
    }
}

/// One periodised analysis step: returns (approximation, detail), each half
/// the input length.
fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for (i, (&hi, &gi)) in h.iter().zip(g).enumerate() {
            let v = x[(2 * k + i) % n];
            sa += hi * v;
            sd += gi * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

/// Adjoint of [`analysis_step`]; `None` stands for an all-zero channel.
fn synthesis_step(a: Option<&[f64]>, d: Option<&[f64]>, half: usize, h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * half;
    let mut x = vec![0.0; n];
    for k in 0..half {
        let ak = a.map_or(0.0, |a| a[k]);
        let dk = d.map_or(0.0, |d| d[k]);
        if ak == 0.0 && dk == 0.0 {
            continue;
        }
        for (i, (&hi, &gi)) in h.iter().zip(g).enumerate() {
            x[(2 * k + i) % n] += hi * ak + gi * dk;
        }
    }
    x
}

fn symmetric_extend(x: ArrayView1<f64>, len: usize) -> Vec<f64> {
    let n = x.len();
    (0..len)
        .map(|i| {
            // reflect with period 2n: 0..n forward, n..2n backward
            let m = i % (2 * n);
            if m < n {
                x[m]
            } else {
                x[2 * n - 1 - m]
            }
        })
        .collect()
}

/// Cascade analysis of `x` over `levels` levels.
pub fn dwt_decompose(x: ArrayView1<f64>, levels: usize, family: WaveletFamily) -> Result<WaveletCoefficients> {
    let len = x.len();
    if levels == 0 {
        return Err(Error::InvalidArgument("at least one decomposition level is required".into()));
    }
    let required = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if len < required {
        return Err(Error::TooManyLevels {
            levels,
            len,
            required,
            max: max_levels(len),
        });
    }
    let padded_length = len.div_ceil(required) * required;
    let h = family.lowpass();
    let g = family.highpass();

    let mut approx = Vec::with_capacity(levels);
    let mut detail = Vec::with_capacity(levels);
    let mut current = symmetric_extend(x, padded_length);
    for _ in 0..levels {
        let (a, d) = analysis_step(&current, h, &g);
        detail.push(d);
        approx.push(a.clone());
        current = a;
    }
    Ok(WaveletCoefficients {
        approx,
        detail,
        original: x.to_vec(),
        original_length: len,
        padded_length,
        family,
    })
}

/// Inverse transform of a single coefficient set, truncated to the original
/// length. `j` follows the stack indexing of [`Subband::from_index`].
pub fn reconstruct_subband(coeffs: &WaveletCoefficients, j: usize) -> Result<Vec<f64>> {
    let levels = coeffs.levels();
    let band = Subband::from_index(j, levels)?;
    let h = coeffs.family.lowpass();
    let g = coeffs.family.highpass();
    let half_at = |level: usize| coeffs.padded_length >> level;

    let (mut signal, start_level) = match band {
        Subband::Original => return Ok(coeffs.original.clone()),
        Subband::Approx(l) => (
            synthesis_step(Some(&coeffs.approx[l - 1]), None, half_at(l), h, &g),
            l,
        ),
        Subband::Detail(l) => (
            synthesis_step(None, Some(&coeffs.detail[l - 1]), half_at(l), h, &g),
            l,
        ),
    };
    for level in (1..start_level).rev() {
        signal = synthesis_step(Some(&signal), None, half_at(level), h, &g);
    }
    signal.truncate(coeffs.original_length);
    Ok(signal)
}

/// The `2L + 1` reconstructed sub-band matrices of one region time-series.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandStack {
    /// `signals[j]` is the `R × T` matrix of sub-band `j`.
    pub signals: Vec<Array2<f64>>,
    pub levels: usize,
    pub family: WaveletFamily,
}

impl SubbandStack {
    pub fn get(&self, band: Subband) -> Result<&Array2<f64>> {
        let j = band.index(self.levels);
        self.signals.get(j).ok_or(Error::SubbandOutOfRange {
            index: j,
            max: 2 * self.levels,
        })
    }

    pub fn subbands(&self) -> Vec<Subband> {
        Subband::all(self.levels)
    }
}

/// Decomposes every region row and reconstructs all `2L + 1` sub-bands.
pub fn decompose_all_subbands(series: ArrayView2<f64>, levels: usize, family: WaveletFamily) -> Result<SubbandStack> {
    let (regions, scans) = series.dim();
    let mut signals = vec![Array2::<f64>::zeros((regions, scans)); 2 * levels + 1];
    signals[0].assign(&series);
    for r in 0..regions {
        let coeffs = dwt_decompose(series.row(r), levels, family)?;
        for (j, out) in signals.iter_mut().enumerate().skip(1) {
            let band = reconstruct_subband(&coeffs, j)?;
            out.row_mut(r).assign(&ArrayView1::from(&band));
        }
    }
    Ok(SubbandStack {
        signals,
        levels,
        family,
    })
}
