//! Large-deviation rate functions from regeneration samples.
//!
//! The pipeline is
//!
//! 1. `Lambda_{W,sigma}(lambda, eta) = log E[exp(lambda W + eta sigma); sigma < inf]`
//!    estimated by [`EmpiricalMGF`];
//! 2. `Lambda_V(lambda) = -sup{eta : Lambda_{W,sigma}(lambda, eta) <= 0}` by a
//!    monotone root solve ([`lambda_v`]);
//! 3. `I_V(x) = sup_{lambda <= 0} lambda x - Lambda_V(lambda)` ([`legendre`]);
//! 4. `I_T(t) = I_V((t - 1) / 2)` and `I_X(x) = x I_T(1 / x)`, with the
//!    mirrored environment supplying `x < 0` ([`rate_t`], [`rate_x`]).

use std::collections::HashMap;
use std::fmt;

use crate::branching::RegenSample;
use crate::env::{RegimeReport, SpeedSign};

/// Queries with fewer effective samples than this are flagged unreliable.
pub const MIN_ESS: f64 = 100.0;
/// Tolerance on `|Lambda_{W,sigma}|` at an accepted root.
pub const ROOT_TOL: f64 = 1e-4;
/// Times the `eta` bracket may double before the solver gives up.
pub const ETA_DOUBLINGS: u32 = 10;

/// One query of the empirical log-MGF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfValue {
    pub value: f64,
    pub se: f64,
    pub ess: f64,
    /// `d value / d eta`, the tilted mean of `sigma`.
    pub d_eta: f64,
}

/// Empirical `Lambda_{W,sigma}` over a fixed batch of cycles. Censored cycles
/// count in the denominator and contribute zero, matching the indicator
/// `1{sigma < inf}`.
#[derive(Debug, Clone)]
pub struct EmpiricalMGF {
    /// Distinct `(sigma, W)` among uncensored cycles with multiplicities.
    atoms: Vec<(f64, f64, f64)>,
    total: u64,
    uncensored: u64,
    sigma_one: u64,
    sum_sigma: f64,
    sum_w: f64,
}

impl EmpiricalMGF {
    pub fn new(samples: &[RegenSample]) -> Self {
        let mut counts: HashMap<(u64, u64), u64> = HashMap::new();
        let mut sum_sigma = 0.0;
        let mut sum_w = 0.0;
        for s in samples.iter().filter(|s| !s.censored) {
            *counts.entry((s.sigma, s.w)).or_default() += 1;
            sum_sigma += s.sigma as f64;
            sum_w += s.w as f64;
        }
        let mut atoms: Vec<(f64, f64, f64)> = counts
            .into_iter()
            .map(|((s, w), c)| (s as f64, w as f64, c as f64))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let uncensored = samples.iter().filter(|s| !s.censored).count() as u64;
        Self {
            atoms,
            total: samples.len() as u64,
            uncensored,
            sigma_one: samples.iter().filter(|s| !s.censored && s.sigma == 1).count() as u64,
            sum_sigma,
            sum_w,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn uncensored_fraction(&self) -> f64 {
        self.uncensored as f64 / self.total as f64
    }

    /// `P(sigma_1 = 1)`, which estimates `E[omega_0(1)]`.
    pub fn sigma_one_fraction(&self) -> f64 {
        self.sigma_one as f64 / self.total as f64
    }

    /// `m0 = E[W] / E[sigma]` over uncensored cycles.
    pub fn m0_hat(&self) -> f64 {
        self.sum_w / self.sum_sigma
    }

    /// `v0 = E[sigma] / E[sigma + 2 W]` over uncensored cycles.
    pub fn v0_hat(&self) -> f64 {
        self.sum_sigma / (self.sum_sigma + 2.0 * self.sum_w)
    }

    pub fn query(&self, lambda: f64, eta: f64) -> MgfValue {
        let n = self.total as f64;
        if self.atoms.is_empty() {
            return MgfValue {
                value: f64::NEG_INFINITY,
                se: f64::INFINITY,
                ess: 0.0,
                d_eta: 0.0,
            };
        }
        let peak = self
            .atoms
            .iter()
            .map(|&(s, w, _)| lambda * w + eta * s)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut s1, mut s2, mut ss) = (0.0, 0.0, 0.0);
        for &(s, w, c) in &self.atoms {
            let e = (lambda * w + eta * s - peak).exp();
            s1 += c * e;
            s2 += c * e * e;
            ss += c * s * e;
        }
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0);
        MgfValue {
            value: peak + mean.ln(),
            se: (var / n).sqrt() / mean,
            ess: s1 * s1 / s2,
            d_eta: ss / s1,
        }
    }
}

/// `Lambda_V` at one `lambda`, with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaVPoint {
    pub lambda: f64,
    pub value: f64,
    pub eta: f64,
    /// `Lambda_{W,sigma}(lambda, eta)` at the returned root.
    pub residual: f64,
    pub ess: f64,
    pub root_ok: bool,
    /// No sign change was found and the value sits at the bracket end.
    pub clamped: bool,
    pub reliable: bool,
}

/// Solves `Lambda_{W,sigma}(lambda, eta) = 0` for `eta` and returns
/// `Lambda_V(lambda) = -eta`.
///
/// The bracket starts at `[0, -log P(sigma = 1)]`: the `sigma = 1` cycles
/// alone push the MGF to 1 at the upper end, so a root always lies inside
/// when such cycles exist. The function is convex and increasing in `eta`,
/// so Newton steps from the upper end converge monotonically; a bisection
/// fallback covers flat stretches.
pub fn lambda_v(mgf: &EmpiricalMGF, lambda: f64, tol: f64) -> LambdaVPoint {
    let f = |eta: f64| mgf.query(lambda, eta);
    let lo_val = f(0.0);
    let mut lo = 0.0;
    let mut clamped = false;
    let mut hi = match mgf.sigma_one_fraction() {
        p if p > 0.0 => -p.ln(),
        _ => 1.0,
    };
    let mut hv = f(hi);
    let mut doublings = 0;
    while hv.value < 0.0 && doublings < ETA_DOUBLINGS {
        lo = hi;
        hi *= 2.0;
        hv = f(hi);
        doublings += 1;
    }
    let (eta, at) = if lo_val.value >= 0.0 {
        (0.0, lo_val)
    } else if hv.value < 0.0 {
        clamped = true;
        (hi, hv)
    } else {
        let mut eta = hi;
        let mut cur = hv;
        for _ in 0..200 {
            if cur.value.abs() <= 1e-13 || hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
            let newton = eta - cur.value / cur.d_eta;
            let next = if newton > lo && newton < hi && cur.d_eta > 0.0 {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let v = f(next);
            if v.value >= 0.0 {
                hi = next;
            } else {
                lo = next;
            }
            eta = next;
            cur = v;
        }
        (eta, cur)
    };
    LambdaVPoint {
        lambda,
        value: -eta,
        eta,
        residual: at.value,
        ess: at.ess,
        root_ok: !clamped && at.value.abs() <= tol,
        clamped,
        reliable: at.ess >= MIN_ESS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    LambdaV,
    IV,
    IT,
    IX,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::LambdaV => "Lambda_V",
            CurveKind::IV => "I_V",
            CurveKind::IT => "I_T",
            CurveKind::IX => "I_X",
        })
    }
}

/// Values at or below this count as zero when locating zero sets.
pub const ZERO_TOL: f64 = 1e-6;

/// Summary attached to every curve at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveMeta {
    /// Smallest divided second difference over reliable points.
    pub min_second_difference: f64,
    /// Smallest and largest abscissa with value `<= ZERO_TOL`.
    pub zero_set: Option<(f64, f64)>,
    pub first_value: f64,
    pub last_value: f64,
}

/// A function tabulated on a sorted grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub kind: CurveKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub unreliable: Vec<bool>,
    pub meta: CurveMeta,
}

/// Divided second differences `2 [x0, x1, x2] f` over consecutive triples.
fn second_differences(x: &[f64], y: &[f64], skip: &[bool]) -> Vec<(f64, f64)> {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| !skip[i] && y[i].is_finite()).collect();
    idx.windows(3)
        .map(|w| {
            let (a, b, c) = (w[0], w[1], w[2]);
            let s1 = (y[b] - y[a]) / (x[b] - x[a]);
            let s2 = (y[c] - y[b]) / (x[c] - x[b]);
            (x[b], 2.0 * (s2 - s1) / (x[c] - x[a]))
        })
        .collect()
}

impl RateCurve {
    pub fn new(kind: CurveKind, grid: Vec<f64>, values: Vec<f64>, unreliable: Vec<bool>) -> Self {
        assert_eq!(grid.len(), values.len());
        assert_eq!(grid.len(), unreliable.len());
        debug_assert!(grid.windows(2).all(|w| w[0] < w[1]));
        let min_second_difference = second_differences(&grid, &values, &unreliable)
            .into_iter()
            .map(|d| d.1)
            .fold(f64::INFINITY, f64::min);
        let zeros: Vec<f64> = grid
            .iter()
            .zip(&values)
            .filter(|(_, v)| **v <= ZERO_TOL)
            .map(|(x, _)| *x)
            .collect();
        let meta = CurveMeta {
            min_second_difference,
            zero_set: zeros.first().map(|&a| (a, *zeros.last().unwrap())),
            first_value: values.first().copied().unwrap_or(f64::NAN),
            last_value: values.last().copied().unwrap_or(f64::NAN),
        };
        Self {
            kind,
            grid,
            values,
            unreliable,
            meta,
        }
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let g = &self.grid;
        if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
            return None;
        }
        let i = g.partition_point(|&v| v < x);
        if g[i] == x {
            return Some(self.values[i]);
        }
        let (x0, x1) = (g[i - 1], g[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }

    /// Abscissa, value, flag rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},value,unreliable\n", self.abscissa_name());
        for ((x, y), u) in self.grid.iter().zip(&self.values).zip(&self.unreliable) {
            out.push_str(&format!("{x:.12e},{y:.12e},{}\n", u8::from(*u)));
        }
        out
    }

    /// Two whitespace-separated columns for plotting tools.
    pub fn to_plot(&self) -> String {
        let mut out = format!("# {} {}\n", self.abscissa_name(), self.kind);
        for (x, y) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{x:.12e} {y:.12e}\n"));
        }
        out
    }

    fn abscissa_name(&self) -> &'static str {
        match self.kind {
            CurveKind::LambdaV => "lambda",
            CurveKind::IV => "x",
            CurveKind::IT => "t",
            CurveKind::IX => "x",
        }
    }
}

/// 25 geometric points from `-2^4` to `-2^-10`, then `0` standing for the
/// left limit `0-`.
pub fn lambda_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..25).map(|k| -(2f64).powf(4.0 - 14.0 * k as f64 / 24.0)).collect();
    g.push(0.0);
    g
}

/// Tabulates `Lambda_V` on a `lambda` grid.
pub fn lambda_v_curve(mgf: &EmpiricalMGF, lambdas: &[f64]) -> (RateCurve, Vec<LambdaVPoint>) {
    let pts: Vec<LambdaVPoint> = lambdas.iter().map(|&l| lambda_v(mgf, l, ROOT_TOL)).collect();
    let curve = RateCurve::new(
        CurveKind::LambdaV,
        lambdas.to_vec(),
        pts.iter().map(|p| p.value).collect(),
        pts.iter().map(|p| !p.reliable).collect(),
    );
    (curve, pts)
}

const GOLDEN_ITERS: usize = 30;

/// `I_V(x) = sup_{lambda <= 0} lambda x - Lambda_V(lambda)` on `xs`.
///
/// The supremum is taken over the tabulated `lambda` grid and, when an
/// evaluator for `Lambda_V` is supplied, refined by golden-section search
/// between the neighbours of the best grid point. Without an evaluator the
/// grid maximum is exact for the piecewise-linear interpolant.
pub fn legendre(lambda_curve: &RateCurve, xs: &[f64], refine: Option<&dyn Fn(f64) -> f64>) -> RateCurve {
    let lg = &lambda_curve.grid;
    let lv = &lambda_curve.values;
    let mut values = Vec::with_capacity(xs.len());
    let mut flags = Vec::with_capacity(xs.len());
    for &x in xs {
        let (k, best) =
            lg.iter()
                .zip(lv)
                .map(|(l, v)| l * x - v)
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, g)| if g > acc.1 { (i, g) } else { acc },
                );
        let mut value = best;
        if let Some(f) = refine {
            let a = if k > 0 { lg[k - 1] } else { lg[k] };
            let b = if k + 1 < lg.len() { lg[k + 1] } else { lg[k] };
            if b > a {
                value = value.max(golden_max(|l| l * x - f(l), a, b));
            }
        }
        values.push(value.max(0.0));
        flags.push(lambda_curve.unreliable[k]);
    }
    RateCurve::new(CurveKind::IV, xs.to_vec(), values, flags)
}

fn golden_max(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..GOLDEN_ITERS {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    gc.max(gd)
}

/// `sup_x lambda x - I(x)` over the curve's grid, the inverse transform.
pub fn conjugate(curve: &RateCurve, lambdas: &[f64]) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| {
            curve
                .grid
                .iter()
                .zip(&curve.values)
                .map(|(x, v)| l * x - v)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// `I_T(t) = I_V((t - 1) / 2)` on `t = 1 + 2x`.
pub fn rate_t(iv: &RateCurve) -> RateCurve {
    RateCurve::new(
        CurveKind::IT,
        iv.grid.iter().map(|x| 1.0 + 2.0 * x).collect(),
        iv.values.clone(),
        iv.unreliable.clone(),
    )
}

/// `I_X` on `xs` in `[-1, 1]`: `x I_T(1 / x)` for `x > 0`,
/// `|x| I_T_mirror(1 / |x|)` for `x < 0`, and `0` at `x = 0`.
/// Points whose `1 / |x|` falls beyond the tabulated `t` range get `NaN`.
pub fn rate_x(it: &RateCurve, it_mirror: &RateCurve, xs: &[f64]) -> RateCurve {
    let mut values = Vec::with_capacity(xs.len());
    let mut flags = Vec::with_capacity(xs.len());
    for &x in xs {
        if x == 0.0 {
            values.push(0.0);
            flags.push(false);
            continue;
        }
        let curve = if x > 0.0 { it } else { it_mirror };
        let t = 1.0 / x.abs();
        let i = curve.grid.partition_point(|&g| g < t).min(curve.grid.len() - 1);
        values.push(x.abs() * curve.value_at(t));
        flags.push(curve.unreliable[i]);
    }
    RateCurve::new(CurveKind::IX, xs.to_vec(), values, flags)
}

/// Default `I_X` grid: step 0.05 on `[-1, 1]` plus `±(1 - 2^-k)` for
/// `k = 5..=10`.
pub fn default_x_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.05).collect();
    for k in 5..=10 {
        let h = 1.0 - (2f64).powi(-k);
        g.push(h);
        g.push(-h);
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// `I_V` abscissae: step `dx` on `[0, x_max]` together with every
/// `(1 / |x| - 1) / 2` needed by `x_grid`, so that `I_T` and `I_X` are read
/// off exact grid values.
pub fn iv_grid(dx: f64, x_max: f64, x_grid: &[f64]) -> Vec<f64> {
    let steps = (x_max / dx).round() as usize;
    let mut g: Vec<f64> = (0..=steps).map(|k| k as f64 * dx).collect();
    for &x in x_grid {
        if x != 0.0 {
            g.push((1.0 / x.abs() - 1.0) / 2.0);
        }
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    g
}

/// Every curve derived from one environment and its mirror.
#[derive(Debug, Clone)]
pub struct RateCurves {
    pub lambda_v: RateCurve,
    pub lambda_points: Vec<LambdaVPoint>,
    pub i_v: RateCurve,
    pub i_t: RateCurve,
    pub i_x: RateCurve,
    pub mirror_lambda_v: RateCurve,
    pub mirror_i_v: RateCurve,
    pub m0_hat: f64,
    pub v0_hat: f64,
}

/// Knobs for [`build_curves`].
#[derive(Debug, Clone)]
pub struct CurveOptions {
    pub lambdas: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub dx: f64,
    pub x_max: f64,
    pub refine: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            lambdas: lambda_grid(),
            x_grid: default_x_grid(),
            dx: 0.05,
            x_max: 10.0,
            refine: true,
        }
    }
}

/// `Lambda_V` and `I_V` for one environment, `I_V` tabulated on `xs`.
pub fn one_sided_curves(
    mgf: &EmpiricalMGF,
    opts: &CurveOptions,
    xs: &[f64],
) -> (RateCurve, Vec<LambdaVPoint>, RateCurve) {
    let (lv, pts) = lambda_v_curve(mgf, &opts.lambdas);
    let eval = |l: f64| lambda_v(mgf, l, ROOT_TOL).value;
    let iv = if opts.refine {
        legendre(&lv, xs, Some(&eval))
    } else {
        legendre(&lv, xs, None)
    };
    (lv, pts, iv)
}

pub fn build_curves(samples: &EmpiricalMGF, mirror_samples: &EmpiricalMGF, opts: &CurveOptions) -> RateCurves {
    let xs = iv_grid(opts.dx, opts.x_max, &opts.x_grid);
    let (lambda_v, lambda_points, i_v) = one_sided_curves(samples, opts, &xs);
    let (mirror_lambda_v, _, mirror_i_v) = one_sided_curves(mirror_samples, opts, &xs);
    let i_t = rate_t(&i_v);
    let i_x = rate_x(&i_t, &rate_t(&mirror_i_v), &opts.x_grid);
    RateCurves {
        lambda_v,
        lambda_points,
        i_v,
        i_t,
        i_x,
        mirror_lambda_v,
        mirror_i_v,
        m0_hat: samples.m0_hat(),
        v0_hat: samples.v0_hat(),
    }
}

/// One named property verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Signed distance from failure; negative when failing.
    pub margin: f64,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} (margin {:.3e}) {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.margin,
            self.detail
        )
    }
}

impl Verdict {
    /// Passes when `margin >= 0`; a NaN margin fails.
    pub fn new(name: impl Into<String>, margin: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: margin >= 0.0,
            margin,
            detail: detail.into(),
        }
    }
}

fn verdict(name: &str, margin: f64, detail: String) -> Verdict {
    Verdict::new(name, margin, detail)
}

/// Discrete convexity over reliable points.
pub fn check_convex(curve: &RateCurve, tol: f64) -> Verdict {
    let d = curve.meta.min_second_difference;
    verdict(
        &format!("{} convex", curve.kind),
        if d.is_finite() { d + tol } else { 0.0 },
        format!("min second difference {d:.3e}"),
    )
}

/// Monotonicity on `[lo, hi]`: `dir = -1` non-increasing, `+1` non-decreasing.
pub fn check_monotone(curve: &RateCurve, lo: f64, hi: f64, dir: f64, tol: f64) -> Verdict {
    let pts: Vec<(f64, f64)> = curve
        .grid
        .iter()
        .zip(&curve.values)
        .zip(&curve.unreliable)
        .filter(|((x, v), u)| **x >= lo && **x <= hi && !**u && v.is_finite())
        .map(|((x, v), _)| (*x, *v))
        .collect();
    let worst = pts
        .windows(2)
        .map(|w| dir * (w[1].1 - w[0].1))
        .fold(f64::INFINITY, f64::min);
    let word = if dir < 0.0 { "non-increasing" } else { "non-decreasing" };
    verdict(
        &format!("{} {word} on [{lo}, {hi}]", curve.kind),
        if worst.is_finite() { worst + tol } else { 0.0 },
        format!("worst step {worst:.3e}"),
    )
}

/// `|curve(x) - target| <= tol`.
pub fn check_value(curve: &RateCurve, x: f64, target: f64, tol: f64) -> Verdict {
    let v = curve.value_at(x);
    verdict(
        &format!("{}({x}) = {target:.6}", curve.kind),
        tol - (v - target).abs(),
        format!("value {v:.6}"),
    )
}

/// Grid points whose value is at most `tol`, as `(first, last, contiguous)`.
pub fn zero_set(curve: &RateCurve, tol: f64) -> Option<(f64, f64, bool)> {
    let idx: Vec<usize> = (0..curve.grid.len()).filter(|&i| curve.values[i] <= tol).collect();
    let first = *idx.first()?;
    let last = *idx.last()?;
    Some((curve.grid[first], curve.grid[last], last - first + 1 == idx.len()))
}

/// Largest gap between consecutive grid points inside `[lo, hi]`.
fn local_step(grid: &[f64], lo: f64, hi: f64) -> f64 {
    grid.windows(2)
        .filter(|w| w[1] >= lo && w[0] <= hi)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max)
}

/// Finite-difference slopes `(I_X(1) - I_X(1 - h)) / h` on the grid points
/// `1 - h`, ordered by decreasing `h`.
pub fn endpoint_slopes(ix: &RateCurve) -> Vec<(f64, f64)> {
    let top = ix.value_at(1.0);
    ix.grid
        .iter()
        .zip(&ix.values)
        .filter(|(x, _)| **x >= 0.5 && **x < 1.0)
        .map(|(x, v)| (1.0 - x, (top - v) / (1.0 - x)))
        .collect()
}

/// Expected endpoint values for the property check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoints {
    /// `-log E[omega_0(1)]`.
    pub right: f64,
    /// `-log E[1 - omega_0(1)]`.
    pub left: f64,
    pub tol: f64,
}

/// Every proven qualitative feature of the curves, as verdicts.
pub fn check_properties(curves: &RateCurves, regime: &RegimeReport, ends: Endpoints) -> Vec<Verdict> {
    let tol = 1e-6;
    let mut out = vec![
        check_convex(&curves.i_v, tol),
        check_monotone(&curves.i_v, 0.0, f64::INFINITY, -1.0, tol),
        check_monotone(&curves.i_t, 1.0, f64::INFINITY, -1.0, tol),
        check_convex(&curves.i_x, tol),
        check_monotone(&curves.i_x, -1.0, 0.0, -1.0, tol),
        check_monotone(&curves.i_x, 0.0, 1.0, 1.0, tol),
        check_value(&curves.i_v, 0.0, ends.right, ends.tol),
        check_value(&curves.i_t, 1.0, ends.right, ends.tol),
        check_value(&curves.i_x, 1.0, ends.right, ends.tol),
        check_value(&curves.i_x, -1.0, ends.left, ends.tol),
    ];
    let zs = zero_set(&curves.i_x, ZERO_TOL);
    let step = local_step(&curves.i_x.grid, -1.0, 1.0);
    match regime.speed_sign {
        SpeedSign::Positive => {
            let (margin, detail) = match zs {
                Some((a, b, contiguous)) => {
                    let err = (a - 0.0).abs().max((b - curves.v0_hat).abs());
                    (
                        if contiguous { step - err } else { -1.0 },
                        format!(
                            "zero set [{a:.4}, {b:.4}], v0_hat {:.4}, grid step {step:.4}",
                            curves.v0_hat
                        ),
                    )
                }
                None => (-1.0, "empty zero set".into()),
            };
            out.push(verdict("I_X zero set = [0, v0]", margin, detail));
            let t_left = zero_set(&curves.i_t, ZERO_TOL).map_or(f64::NAN, |z| z.0);
            let want = 1.0 + 2.0 * curves.m0_hat;
            let t_step = local_step(&curves.i_t.grid, want - 1.0, want + 1.0);
            out.push(verdict(
                "I_T zero set starts at 1 + 2 m0",
                t_step - (t_left - want).abs(),
                format!("left end {t_left:.4}, 1 + 2 m0_hat = {want:.4}, grid step {t_step:.4}"),
            ));
        }
        SpeedSign::Zero => {
            let (margin, detail) = match zs {
                Some((a, b, _)) => {
                    let positive_min = curves
                        .i_x
                        .grid
                        .iter()
                        .zip(&curves.i_x.values)
                        .filter(|(x, _)| **x != 0.0)
                        .map(|(_, v)| *v)
                        .fold(f64::INFINITY, f64::min);
                    (
                        if a == 0.0 && b == 0.0 {
                            positive_min - ZERO_TOL
                        } else {
                            -(b - a).max(step)
                        },
                        format!("zero set [{a:.4}, {b:.4}], smallest value off 0 {positive_min:.3e}"),
                    )
                }
                None => (-1.0, "empty zero set".into()),
            };
            out.push(verdict("I_X zero only at 0", margin, detail));
        }
        SpeedSign::Negative => {}
    }
    let slopes = endpoint_slopes(&curves.i_x);
    let rising = slopes.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min);
    out.push(verdict(
        "I_X slope steepens toward 1",
        if slopes.len() >= 2 { rising } else { -1.0 },
        format!(
            "slopes {}",
            slopes
                .iter()
                .map(|(h, s)| format!("h={h:.4}:{s:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    ));
    let inf_iv = curves.i_v.values.iter().copied().fold(f64::INFINITY, f64::min);
    out.push(verdict(
        "inf I_V = 0",
        ZERO_TOL - inf_iv,
        format!("inf over grid {inf_iv:.3e}"),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_mass(n: usize) -> Vec<RegenSample> {
        vec![RegenSample::complete(1, 0); n]
    }

    #[test]
    fn point_mass_gives_flat_lambda_v() {
        let mgf = EmpiricalMGF::new(&point_mass(500));
        for l in [-16.0, -1.0, -0.01, 0.0] {
            let q = mgf.query(l, 0.3);
            assert!((q.value - 0.3).abs() < 1e-15);
            let p = lambda_v(&mgf, l, ROOT_TOL);
            assert!(p.value.abs() < 1e-12 && p.root_ok);
        }
        let (lv, _) = lambda_v_curve(&mgf, &lambda_grid());
        let iv = legendre(&lv, &[0.0, 0.5, 3.0], None);
        assert!(iv.values.iter().all(|v| *v == 0.0));
        let it = rate_t(&iv);
        assert_eq!(it.grid[0], 1.0);
        assert_eq!(it.values[0], 0.0);
    }

    #[test]
    fn value_at_origin_is_log_uncensored_fraction() {
        let mut s = point_mass(30);
        s.push(RegenSample::complete(3, 5));
        s.push(RegenSample {
            sigma: 9,
            w: 40,
            censored: true,
        });
        let mgf = EmpiricalMGF::new(&s);
        assert!((mgf.query(0.0, 0.0).value - (31.0f64 / 32.0).ln()).abs() < 1e-14);
        assert_eq!(mgf.distinct_atoms(), 2);
        assert!((mgf.sigma_one_fraction() - 30.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn hand_example_root() {
        // half the cycles are (1, 0), half (2, 1): at lambda = -ln 2 the root
        // solves e^eta / 2 + e^(2 eta) / 4 = 1, i.e. e^eta = sqrt(5) - 1
        let mut s = point_mass(50);
        s.extend(vec![RegenSample::complete(2, 1); 50]);
        let mgf = EmpiricalMGF::new(&s);
        let p = lambda_v(&mgf, -(2f64.ln()), 1e-10);
        assert!((p.eta - (5f64.sqrt() - 1.0).ln()).abs() < 1e-12);
        assert!(p.residual.abs() < 1e-12);
        assert!((mgf.m0_hat() - 1.0 / 3.0).abs() < 1e-15);
        assert!((mgf.v0_hat() - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_grid_shape() {
        let g = lambda_grid();
        assert_eq!(g.len(), 26);
        assert_eq!(g[0], -16.0);
        assert!((g[24] + (2f64).powi(-10)).abs() < 1e-15);
        assert_eq!(g[25], 0.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn non_convex_curve_is_caught() {
        let c = RateCurve::new(
            CurveKind::IV,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1.0, 0.2, 0.8, 0.0],
            vec![false; 4],
        );
        assert!(!check_convex(&c, 1e-9).pass);
        let ok = RateCurve::new(
            CurveKind::IV,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1.0, 0.4, 0.1, 0.0],
            vec![false; 4],
        );
        assert!(check_convex(&ok, 1e-9).pass);
        assert!(check_monotone(&ok, 0.0, 3.0, -1.0, 0.0).pass);
        assert!(!check_monotone(&c, 0.0, 3.0, -1.0, 0.0).pass);
    }

    #[test]
    fn legendre_of_quadratic() {
        // Lambda(l) = l^2 / 2 on l <= 0 has conjugate x^2 / 2 for x <= 0 and
        // 0 for x >= 0 when restricted to l <= 0; check negative-slope side
        // through the mirror: use Lambda(l) = l^2/2 + l, so I(x) = (x-1)^2/2
        // for x <= 1 and 0 beyond.
        let lambdas: Vec<f64> = (0..=400).map(|k| -4.0 + k as f64 * 0.01).collect();
        let vals: Vec<f64> = lambdas.iter().map(|l| l * l / 2.0 + l).collect();
        let lc = RateCurve::new(CurveKind::LambdaV, lambdas.clone(), vals, vec![false; 401]);
        let f = |l: f64| l * l / 2.0 + l;
        let xs = [-2.0, 0.0, 0.5, 1.0, 2.0];
        let iv = legendre(&lc, &xs, Some(&f));
        for (x, v) in xs.iter().zip(&iv.values) {
            let want = if *x <= 1.0 { (x - 1.0).powi(2) / 2.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-9, "x = {x}: {v} vs {want}");
        }
    }

    #[test]
    fn rate_x_assembly() {
        let it = RateCurve::new(CurveKind::IT, vec![1.0, 2.0, 4.0], vec![0.3, 0.1, 0.0], vec![false; 3]);
        let itm = RateCurve::new(CurveKind::IT, vec![1.0, 2.0, 4.0], vec![1.4, 1.0, 0.9], vec![false; 3]);
        let ix = rate_x(&it, &itm, &[-1.0, -0.5, 0.0, 0.25, 0.5, 1.0]);
        let want = [1.4, 0.5, 0.0, 0.0, 0.05, 0.3];
        for (v, w) in ix.values.iter().zip(want) {
            assert!((v - w).abs() < 1e-15);
        }
        assert_eq!(zero_set(&ix, 1e-12), Some((0.0, 0.25, true)));
    }

    #[test]
    fn grids_align() {
        let xg = default_x_grid();
        assert!(xg.contains(&1.0) && xg.contains(&-1.0) && xg.contains(&0.0));
        let g = iv_grid(0.05, 10.0, &xg);
        for &x in &xg {
            if x != 0.0 {
                let y = (1.0 / x.abs() - 1.0) / 2.0;
                assert!(g.iter().any(|v| (v - y).abs() < 1e-12));
            }
        }
    }
}
