//! Arc-length abscissa on FRF curves: chord length in a normalized
//! `(ω, A)` plane, landmark extrema, and piecewise normalization placing the
//! `k`-th landmark at `s = k`.

use crate::continuation::FrfCurve;
use crate::error::{Error, Result};

/// Min-max normalization of both axes over a curve family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisScaling {
    pub omega_min: f64,
    pub omega_max: f64,
    pub amp_min: f64,
    pub amp_max: f64,
}

impl AxisScaling {
    pub fn from_curves<'a>(curves: impl IntoIterator<Item = &'a FrfCurve>) -> Result<Self> {
        let mut sc = Self {
            omega_min: f64::INFINITY,
            omega_max: f64::NEG_INFINITY,
            amp_min: f64::INFINITY,
            amp_max: f64::NEG_INFINITY,
        };
        for c in curves {
            for p in &c.points {
                sc.omega_min = sc.omega_min.min(p.omega);
                sc.omega_max = sc.omega_max.max(p.omega);
                sc.amp_min = sc.amp_min.min(p.amplitude);
                sc.amp_max = sc.amp_max.max(p.amplitude);
            }
        }
        if !(sc.omega_max > sc.omega_min) || !(sc.amp_max > sc.amp_min) {
            return Err(Error::DegenerateCurve("family spans a zero range on one axis".into()));
        }
        Ok(sc)
    }

    pub fn amp_range(&self) -> f64 {
        self.amp_max - self.amp_min
    }

    fn normalized(&self, omega: f64, amp: f64) -> (f64, f64) {
        (
            (omega - self.omega_min) / (self.omega_max - self.omega_min),
            (amp - self.amp_min) / (self.amp_max - self.amp_min),
        )
    }
}

/// Cumulative chord length of a polyline in the normalized plane.
pub fn chord_length(omega: &[f64], amp: &[f64], scaling: &AxisScaling) -> Result<Vec<f64>> {
    if omega.len() < 2 || omega.len() != amp.len() {
        return Err(Error::DegenerateCurve("need at least two points".into()));
    }
    let mut s = Vec::with_capacity(omega.len());
    s.push(0.0);
    let mut prev = scaling.normalized(omega[0], amp[0]);
    for (&w, &a) in omega.iter().zip(amp).skip(1) {
        let cur = scaling.normalized(w, a);
        let d = ((cur.0 - prev.0).powi(2) + (cur.1 - prev.1).powi(2)).sqrt();
        s.push(s.last().unwrap() + d);
        prev = cur;
    }
    if *s.last().unwrap() == 0.0 {
        return Err(Error::DegenerateCurve("all points coincide".into()));
    }
    Ok(s)
}

/// Raw chord-length abscissa of an FRF curve, `s[0] = 0`.
pub fn chord_arclength(curve: &FrfCurve, scaling: &AxisScaling) -> Result<Vec<f64>> {
    chord_length(&curve.omegas(), &curve.amplitudes(), scaling)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub is_max: bool,
    pub prominence: f64,
}

/// Prominence of each strict local extremum of `a` (maxima on `a`, minima on
/// `−a`): height above the higher of the two lowest points separating it from
/// a more extreme point (or the curve end).
pub fn extrema(a: &[f64]) -> Vec<Extremum> {
    let n = a.len();
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        let v: Vec<f64> = a.iter().map(|x| sign * x).collect();
        let mut i = 1;
        while i + 1 < n {
            // A plateau of equal values counts once, at its first index.
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[i] > v[i - 1] && v[i] > v[j + 1] {
                let mut left = v[i];
                let mut k = i;
                while k > 0 && v[k - 1] <= v[i] {
                    k -= 1;
                    left = left.min(v[k]);
                }
                let mut right = v[i];
                let mut k = j;
                while k + 1 < n && v[k + 1] <= v[i] {
                    k += 1;
                    right = right.min(v[k]);
                }
                out.push(Extremum {
                    index: i,
                    is_max: sign > 0.0,
                    prominence: v[i] - left.max(right),
                });
            }
            i = j + 1;
        }
    }
    out
}

/// Landmark indices `[0, interior..., last]`: the `n_regions − 1` most
/// prominent extrema with prominence at least `min_prominence`, in curve order.
pub fn find_landmarks(curve: &FrfCurve, n_regions: usize, min_prominence: f64) -> Result<Vec<usize>> {
    landmarks_from_amplitudes(&curve.amplitudes(), n_regions, min_prominence)
}

pub fn landmarks_from_amplitudes(a: &[f64], n_regions: usize, min_prominence: f64) -> Result<Vec<usize>> {
    if n_regions == 0 {
        return Err(Error::Landmarks("n_regions must be positive".into()));
    }
    if a.len() < 2 {
        return Err(Error::DegenerateCurve("need at least two points".into()));
    }
    let mut ex: Vec<Extremum> = extrema(a).into_iter().filter(|e| e.prominence >= min_prominence).collect();
    let need = n_regions - 1;
    if ex.len() < need {
        return Err(Error::Landmarks(format!(
            "{need} interior extrema requested, {} found above prominence {min_prominence:e}",
            ex.len()
        )));
    }
    ex.sort_by(|x, y| y.prominence.total_cmp(&x.prominence).then(x.index.cmp(&y.index)));
    let mut idx: Vec<usize> = ex[..need].iter().map(|e| e.index).collect();
    idx.sort_unstable();
    let mut out = Vec::with_capacity(n_regions + 1);
    out.push(0);
    out.extend(idx);
    out.push(a.len() - 1);
    Ok(out)
}

/// Landmarks at the points nearest (in `ω`) to the given frequencies, for a
/// manual override.
pub fn landmarks_at_omegas(curve: &FrfCurve, omegas: &[f64]) -> Result<Vec<usize>> {
    let n = curve.len();
    let mut out = vec![0];
    for &w in omegas {
        let (i, _) = curve
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p.omega - w).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::DegenerateCurve("empty curve".into()))?;
        out.push(i);
    }
    out.push(n - 1);
    if out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Landmarks("override landmarks are not strictly ordered along the curve".into()));
    }
    Ok(out)
}

/// FRF with a piecewise-normalized abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcParametrizedFrf {
    pub beta: f64,
    pub s: Vec<f64>,
    pub omega: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// Point indices of landmarks `0..=n_regions`.
    pub landmarks: Vec<usize>,
    pub n_regions: usize,
}

pub fn piecewise_normalize(curve: &FrfCurve, raw_s: &[f64], landmarks: &[usize]) -> Result<ArcParametrizedFrf> {
    normalize_polyline(curve.beta, curve.omegas(), curve.amplitudes(), raw_s, landmarks)
}

pub fn normalize_polyline(
    beta: f64,
    omega: Vec<f64>,
    amplitude: Vec<f64>,
    raw_s: &[f64],
    landmarks: &[usize],
) -> Result<ArcParametrizedFrf> {
    let n = raw_s.len();
    if omega.len() != n || amplitude.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: omega.len(),
        });
    }
    if landmarks.len() < 2 || landmarks[0] != 0 || *landmarks.last().unwrap() != n - 1 {
        return Err(Error::Landmarks("landmarks must start at the first and end at the last point".into()));
    }
    if landmarks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Landmarks("landmarks must be strictly increasing".into()));
    }
    if raw_s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateCurve("repeated consecutive points".into()));
    }
    let n_regions = landmarks.len() - 1;
    let mut s = vec![0.0; n];
    for k in 0..n_regions {
        let (i0, i1) = (landmarks[k], landmarks[k + 1]);
        let (s0, s1) = (raw_s[i0], raw_s[i1]);
        for i in i0..=i1 {
            s[i] = k as f64 + (raw_s[i] - s0) / (s1 - s0);
        }
        s[i0] = k as f64;
        s[i1] = (k + 1) as f64;
    }
    Ok(ArcParametrizedFrf {
        beta,
        s,
        omega,
        amplitude,
        landmarks: landmarks.to_vec(),
        n_regions,
    })
}

/// Position of `s` in a sorted abscissa: segment index and fraction.
fn locate(sv: &[f64], s: f64) -> (usize, f64) {
    let i = sv.partition_point(|&x| x <= s).clamp(1, sv.len() - 1) - 1;
    let t = (s - sv[i]) / (sv[i + 1] - sv[i]);
    (i, t)
}

impl ArcParametrizedFrf {
    /// `(ω(s), A(s))` by linear interpolation.
    pub fn lookup(&self, s: f64) -> Result<(f64, f64)> {
        let max = self.n_regions as f64;
        if !(0.0..=max).contains(&s) {
            return Err(Error::OutOfRange { value: s, min: 0.0, max });
        }
        let (i, t) = locate(&self.s, s);
        if t == 0.0 {
            return Ok((self.omega[i], self.amplitude[i]));
        }
        if t == 1.0 {
            return Ok((self.omega[i + 1], self.amplitude[i + 1]));
        }
        Ok((
            self.omega[i] + t * (self.omega[i + 1] - self.omega[i]),
            self.amplitude[i] + t * (self.amplitude[i + 1] - self.amplitude[i]),
        ))
    }
}

pub fn frf_lookup(pfrf: &ArcParametrizedFrf, s: f64) -> Result<(f64, f64)> {
    pfrf.lookup(s)
}

/// Parametrizes one curve in a given axis scaling, with automatic landmarks
/// (prominence threshold `rel_prominence` times the scaling amplitude range)
/// or override frequencies.
pub fn parametrize_curve(
    curve: &FrfCurve,
    scaling: &AxisScaling,
    n_regions: usize,
    rel_prominence: f64,
    override_omegas: Option<&[f64]>,
) -> Result<ArcParametrizedFrf> {
    let raw = chord_arclength(curve, scaling)?;
    let lm = match override_omegas {
        Some(w) => {
            if w.len() + 1 != n_regions {
                return Err(Error::Landmarks(format!(
                    "override has {} interior landmarks, expected {}",
                    w.len(),
                    n_regions - 1
                )));
            }
            landmarks_at_omegas(curve, w)?
        }
        None => find_landmarks(curve, n_regions, rel_prominence * scaling.amp_range())?,
    };
    piecewise_normalize(curve, &raw, &lm)
}

/// Arc-parametrized curves of one family sharing axis scaling and region count.
#[derive(Debug, Clone)]
pub struct ArcFamily {
    pub scaling: AxisScaling,
    pub curves: Vec<ArcParametrizedFrf>,
}

impl ArcFamily {
    /// Parametrizes every curve with automatic landmarks (prominence threshold
    /// `rel_prominence` times the family amplitude range) or, when given,
    /// per-curve override frequencies.
    pub fn build(curves: &[FrfCurve], n_regions: usize, rel_prominence: f64, overrides: Option<&[Vec<f64>]>) -> Result<Self> {
        let scaling = AxisScaling::from_curves(curves)?;
        let mut out = Vec::with_capacity(curves.len());
        for (ci, c) in curves.iter().enumerate() {
            let ov = match overrides {
                Some(ov) => Some(
                    ov.get(ci)
                        .ok_or_else(|| Error::Landmarks(format!("no override for curve {ci}")))?
                        .as_slice(),
                ),
                None => None,
            };
            out.push(parametrize_curve(c, &scaling, n_regions, rel_prominence, ov)?);
        }
        out.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        Ok(Self { scaling, curves: out })
    }

    pub fn betas(&self) -> Vec<f64> {
        self.curves.iter().map(|c| c.beta).collect()
    }

    /// `(ω, A)` at `(β, s)`, linear in `β` between the bracketing curves
    /// (clamped to the end curves outside the family range).
    pub fn lookup(&self, beta: f64, s: f64) -> Result<(f64, f64)> {
        let n = self.curves.len();
        if n == 0 {
            return Err(Error::DegenerateCurve("empty family".into()));
        }
        if n == 1 || beta <= self.curves[0].beta {
            return self.curves[0].lookup(s);
        }
        if beta >= self.curves[n - 1].beta {
            return self.curves[n - 1].lookup(s);
        }
        let j = self.curves.partition_point(|c| c.beta <= beta).clamp(1, n - 1);
        let (lo, hi) = (&self.curves[j - 1], &self.curves[j]);
        let t = (beta - lo.beta) / (hi.beta - lo.beta);
        let (w0, a0) = lo.lookup(s)?;
        let (w1, a1) = hi.lookup(s)?;
        Ok((w0 + t * (w1 - w0), a0 + t * (a1 - a0)))
    }
}
