//! Asymptotic state-space division of simplified (bias-free tanh) policies.
//!
//! Far from the origin the first layer saturates: `tanh(W¹·l·d) → sign(W¹d)`
//! as `l → ∞`. The sign vector [`phi`] is constant on angular sectors of the
//! unit circle whose boundaries are the directions perpendicular to the
//! first-layer weight vectors. Those perpendiculars, extended through the
//! origin, are the division lines. Crossing line `i` flips feature `i` from
//! `−1` to `+1`, and the resulting jump in the saturated output is the line's
//! [`significance`].
//!
//! Near a line the transition is smooth: at perpendicular offset `x` the
//! feature is `δᵢ = tanh(‖w¹ᵢ‖·x)` ([`strip_delta`]), and the output through
//! the strip is [`psi_bar`]. The zero level set of the real network
//! ([`practical_line`]) sits where `psi_bar` crosses zero, which is why it is
//! offset from the weight-perpendicular by a fixed distance ([`line_offset`]).

use std::f64::consts::{PI, TAU};

use log::{debug, warn};

use crate::env::{Controller, State};
use crate::net::PolicyNet;

/// Threshold below which `w¹ᵢᵀd` counts as zero.
pub const SIGN_TOL: f64 = 1e-12;
/// Rows shorter than this have no meaningful direction and are skipped.
pub const MIN_ROW_NORM: f64 = 1e-9;
/// Rows closer than this in angle are treated as parallel, radians.
pub const PARALLEL_TOL: f64 = 0.1 * PI / 180.0;
/// Angular resolution of the practical-line scan.
pub const SCAN_ANGLES: usize = 4096;
/// Angular tolerance of the practical-line bisection, radians.
pub const CROSSING_TOL: f64 = 1e-9;
/// Radii of the finite-space confirmation of dead zones.
pub const DEAD_ZONE_RADII: [f64; 3] = [10.0, 100.0, 1000.0];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DivisionError {
    #[error("analysis requires simplified tanh network")]
    NotSimplified,
    #[error("row {0} does not exist")]
    NoSuchRow(usize),
    #[error("row {0} has a (near) zero weight vector")]
    ZeroRow(usize),
    #[error("all first-layer weight rows are near zero")]
    AllRowsZero,
    #[error("direction lies on a division line of row {0}; use psi_bar")]
    OnBoundary(usize),
    #[error("division direction of row {row} is also a division direction of row {conflicting}")]
    Degenerate { row: usize, conflicting: usize },
    #[error("no practical division line at radius {0}")]
    NoPracticalLine(f64),
}

/// Unit vector in the state plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
}

impl Direction {
    pub fn new(x: f64, y: f64) -> Self {
        let n = x.hypot(y);
        assert!(n > 0.0, "zero vector has no direction");
        Direction { x: x / n, y: y / n }
    }

    pub fn from_angle(theta: f64) -> Self {
        Direction {
            x: theta.cos(),
            y: theta.sin(),
        }
    }

    /// Angle in `[0, 2π)`.
    pub fn angle(&self) -> f64 {
        self.y.atan2(self.x).rem_euclid(TAU)
    }

    pub fn dot(&self, w: [f64; 2]) -> f64 {
        w[0] * self.x + w[1] * self.y
    }

    pub fn at(&self, l: f64) -> State {
        State::new(self.x * l, self.y * l)
    }
}

impl std::ops::Neg for Direction {
    type Output = Direction;
    fn neg(self) -> Direction {
        Direction { x: -self.x, y: -self.y }
    }
}

/// One of the two unit perpendiculars of first-layer row `index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionLine {
    pub index: usize,
    pub direction: Direction,
    pub weight_norm: f64,
    /// ρ ∈ [0, 2]; `None` until computed.
    pub significance: Option<f64>,
    /// `false` for `(w₂, −w₁)/‖w‖`, `true` for its negation.
    pub antipodal: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DivisionDirections {
    pub lines: Vec<DivisionLine>,
    pub skipped_rows: Vec<usize>,
    pub parallel_pairs: Vec<(usize, usize)>,
}

/// Sign vector of the saturated first layer.
pub type Feature = Vec<i8>;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeature {
    pub phi: Feature,
    pub representative: Direction,
    /// `(lo, hi)` with `lo ∈ [0, 2π)` and `hi > lo`; the sector that wraps
    /// past 2π has `hi > 2π`.
    pub angular_interval: (f64, f64),
}

impl RegionFeature {
    pub fn width(&self) -> f64 {
        self.angular_interval.1 - self.angular_interval.0
    }
}

/// `δ` and its perpendicular offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripProbe {
    pub index: usize,
    pub offset: f64,
    pub delta: f64,
    pub output: f64,
}

/// Zero of the strip output along line `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripRoot {
    pub index: usize,
    /// All δ ∈ (−1, 1) with `psi_bar(δ) = 0`, ascending.
    pub deltas: Vec<f64>,
    /// Whether the output is monotone in δ over the scan.
    pub monotone: bool,
}

impl StripRoot {
    /// Perpendicular offsets `atanh(δ)/‖w¹ᵢ‖` of the roots.
    pub fn offsets(&self, weight_norm: f64) -> Vec<f64> {
        self.deltas.iter().map(|d| d.atanh() / weight_norm).collect()
    }
}

/// Zero crossing of a controller's output on a circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub angle: f64,
    pub state: State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadZone {
    pub region: RegionFeature,
    pub asymptotic_output: f64,
}

fn require_simplified(net: &PolicyNet) -> Result<(), DivisionError> {
    if net.is_simplified() {
        Ok(())
    } else {
        Err(DivisionError::NotSimplified)
    }
}

fn row(net: &PolicyNet, i: usize) -> Result<[f64; 2], DivisionError> {
    let w = net.first_layer();
    if i >= w.nrows() {
        return Err(DivisionError::NoSuchRow(i));
    }
    Ok([w[[i, 0]], w[[i, 1]]])
}

fn rows(net: &PolicyNet) -> Vec<[f64; 2]> {
    net.first_layer().outer_iter().map(|r| [r[0], r[1]]).collect()
}

fn sign_of(x: f64) -> i8 {
    if x.abs() < SIGN_TOL {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Canonical perpendicular `(w₂, −w₁)/‖w‖` of a row.
fn perpendicular(w: [f64; 2]) -> Direction {
    Direction::new(w[1], -w[0])
}

/// Angle between the lines spanned by two rows, in `[0, π/2]`.
fn line_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    let t = cross.abs().atan2(dot.abs());
    t.min(PI - t)
}

/// Both perpendicular directions of every usable first-layer row.
pub fn division_directions(net: &PolicyNet) -> Result<DivisionDirections, DivisionError> {
    require_simplified(net)?;
    let rows = rows(net);
    let mut out = DivisionDirections::default();
    let mut usable = Vec::new();
    for (i, w) in rows.iter().enumerate() {
        let norm = w[0].hypot(w[1]);
        if norm < MIN_ROW_NORM {
            debug!("first-layer row {i} has norm {norm:e}; skipped");
            out.skipped_rows.push(i);
            continue;
        }
        let d = perpendicular(*w);
        for (antipodal, dir) in [(false, d), (true, -d)] {
            out.lines.push(DivisionLine {
                index: i,
                direction: dir,
                weight_norm: norm,
                significance: None,
                antipodal,
            });
        }
        usable.push(i);
    }
    for (a, &i) in usable.iter().enumerate() {
        for &j in &usable[a + 1..] {
            if line_angle(rows[i], rows[j]) < PARALLEL_TOL {
                debug!("first-layer rows {i} and {j} are parallel within 0.1°");
                out.parallel_pairs.push((i, j));
            }
        }
    }
    Ok(out)
}

/// `sign(W¹d)` with `|·| < SIGN_TOL` mapped to 0.
pub fn phi(net: &PolicyNet, d: Direction) -> Result<Feature, DivisionError> {
    require_simplified(net)?;
    Ok(rows(net).iter().map(|w| sign_of(d.dot(*w))).collect())
}

/// Feeds a first-layer feature vector through the remaining layers.
pub fn propagate_feature(net: &PolicyNet, feature: &[f64]) -> f64 {
    net.mlp().eval_from(1, feature)[0]
}

/// Saturated unscaled output in the region containing `d`.
pub fn phi_bar(net: &PolicyNet, d: Direction) -> Result<f64, DivisionError> {
    let f = phi(net, d)?;
    let live = rows(net).iter().map(|w| w[0].hypot(w[1]) >= MIN_ROW_NORM).collect::<Vec<_>>();
    if let Some(i) = f.iter().zip(&live).position(|(&x, &live)| x == 0 && live) {
        return Err(DivisionError::OnBoundary(i));
    }
    let feature: Vec<f64> = f.iter().map(|&x| f64::from(x)).collect();
    Ok(propagate_feature(net, &feature))
}

/// Angular partition of the unit circle by the division directions.
pub fn regions(net: &PolicyNet) -> Result<Vec<RegionFeature>, DivisionError> {
    let dirs = division_directions(net)?;
    if dirs.lines.is_empty() {
        return Err(DivisionError::AllRowsZero);
    }
    let mut angles: Vec<f64> = dirs.lines.iter().map(|l| l.direction.angle()).collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    let mut boundaries: Vec<f64> = Vec::with_capacity(angles.len());
    for a in angles {
        match boundaries.last() {
            Some(&last) if a - last < PARALLEL_TOL => {}
            _ => boundaries.push(a),
        }
    }
    if boundaries.len() > 1 && boundaries[0] + TAU - boundaries[boundaries.len() - 1] < PARALLEL_TOL {
        boundaries.pop();
    }
    let n = boundaries.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lo = boundaries[k];
        let hi = if k + 1 < n { boundaries[k + 1] } else { boundaries[0] + TAU };
        let representative = Direction::from_angle(0.5 * (lo + hi));
        out.push(RegionFeature {
            phi: phi(net, representative)?,
            representative,
            angular_interval: (lo, hi),
        });
    }
    Ok(out)
}

/// Strip feature: row `i` set to `delta`, every other row saturated along `d`.
fn strip_feature(net: &PolicyNet, i: usize, d: Direction) -> Result<Vec<f64>, DivisionError> {
    let mut feature = Vec::new();
    for (j, w) in rows(net).iter().enumerate() {
        if j == i {
            feature.push(0.0);
            continue;
        }
        match sign_of(d.dot(*w)) {
            0 if w[0].hypot(w[1]) < MIN_ROW_NORM => feature.push(0.0),
            0 => return Err(DivisionError::Degenerate { row: i, conflicting: j }),
            s => feature.push(f64::from(s)),
        }
    }
    Ok(feature)
}

fn strip_direction(net: &PolicyNet, i: usize) -> Result<(Direction, f64), DivisionError> {
    require_simplified(net)?;
    let w = row(net, i)?;
    let norm = w[0].hypot(w[1]);
    if norm < MIN_ROW_NORM {
        return Err(DivisionError::ZeroRow(i));
    }
    Ok((perpendicular(w), norm))
}

/// Output through the strip of line `i` along its canonical direction.
pub fn psi_bar(net: &PolicyNet, i: usize, delta: f64) -> Result<f64, DivisionError> {
    let (d, _) = strip_direction(net, i)?;
    psi_bar_along(net, i, d, delta)
}

/// [`psi_bar`] along an explicit division direction of row `i`.
pub fn psi_bar_along(net: &PolicyNet, i: usize, d: Direction, delta: f64) -> Result<f64, DivisionError> {
    let mut feature = strip_feature(net, i, d)?;
    feature[i] = delta;
    Ok(propagate_feature(net, &feature))
}

/// ρᵢ = |ψ̄(d, 1) − ψ̄(d, −1)|.
pub fn significance(net: &PolicyNet, i: usize) -> Result<f64, DivisionError> {
    let (d, _) = strip_direction(net, i)?;
    let jump = |dir: Direction| -> Result<f64, DivisionError> {
        Ok((psi_bar_along(net, i, dir, 1.0)? - psi_bar_along(net, i, dir, -1.0)?).abs())
    };
    let rho = jump(d)?;
    let rho_antipodal = jump(-d)?;
    debug_assert!(
        (rho - rho_antipodal).abs() < 1e-12,
        "antipodal significance differs: {rho} vs {rho_antipodal}"
    );
    Ok(rho)
}

/// [`division_directions`] with every line's significance filled in.
/// Lines whose row is degenerate keep `None`.
pub fn division_lines(net: &PolicyNet) -> Result<Vec<DivisionLine>, DivisionError> {
    let mut lines = division_directions(net)?.lines;
    for line in &mut lines {
        line.significance = significance(net, line.index).ok();
    }
    Ok(lines)
}

/// δᵢ = tanh(‖w¹ᵢ‖·x).
pub fn strip_delta(net: &PolicyNet, i: usize, x: f64) -> Result<f64, DivisionError> {
    let w = row(net, i)?;
    Ok((w[0].hypot(w[1]) * x).tanh())
}

pub fn strip_probe(net: &PolicyNet, i: usize, x: f64) -> Result<StripProbe, DivisionError> {
    let delta = strip_delta(net, i, x)?;
    Ok(StripProbe {
        index: i,
        offset: x,
        delta,
        output: psi_bar(net, i, delta)?,
    })
}

/// Largest elementwise gap between the first layer evaluated at
/// `d·l + d⊥·x` and its saturated closed form, where `d` is the canonical
/// division direction of row `i` and `d⊥ = w¹ᵢ/‖w¹ᵢ‖`.
///
/// Meaningful for `l ≥ 1e4 / min row norm`.
pub fn strip_formula_check(net: &PolicyNet, i: usize, x: f64, l: f64) -> Result<f64, DivisionError> {
    let (d, norm) = strip_direction(net, i)?;
    let w_i = row(net, i)?;
    let d_perp = [w_i[0] / norm, w_i[1] / norm];
    let s = [d.x * l + d_perp[0] * x, d.y * l + d_perp[1] * x];
    let mut worst = 0.0f64;
    for (j, w) in rows(net).iter().enumerate() {
        let direct = (w[0] * s[0] + w[1] * s[1]).tanh();
        let closed = if j == i {
            (norm * x).tanh()
        } else {
            f64::from(sign_of(d.dot(*w)))
        };
        worst = worst.max((direct - closed).abs());
    }
    Ok(worst)
}

/// Roots of `psi_bar(i, ·)` on (−1, 1): a 1001-point scan, then bisection of
/// each sign change to 1e-10.
pub fn strip_root(net: &PolicyNet, i: usize) -> Result<StripRoot, DivisionError> {
    const SAMPLES: usize = 1001;
    let (d, _) = strip_direction(net, i)?;
    let f = |delta: f64| psi_bar_along(net, i, d, delta);
    let grid: Vec<f64> = (0..SAMPLES).map(|k| -1.0 + 2.0 * k as f64 / (SAMPLES - 1) as f64).collect();
    let values = grid.iter().map(|&x| f(x)).collect::<Result<Vec<_>, _>>()?;
    let increasing = values.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = values.windows(2).all(|w| w[1] <= w[0]);
    let mut deltas = Vec::new();
    for k in 0..SAMPLES - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let (fa, fb) = (values[k], values[k + 1]);
        if fa == 0.0 {
            deltas.push(a);
        } else if fa * fb < 0.0 {
            deltas.push(bisect(&|x| f(x).unwrap_or(f64::NAN), a, b, fa, 1e-10));
        }
    }
    if values[SAMPLES - 1] == 0.0 {
        deltas.push(1.0);
    }
    if deltas.len() > 1 {
        warn!("strip output of row {i} has {} roots", deltas.len());
    }
    Ok(StripRoot {
        index: i,
        deltas,
        monotone: increasing || decreasing,
    })
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Zero crossings of the controller's output on the circle of `radius`.
///
/// Scans [`SCAN_ANGLES`] equally spaced angles and bisects every sign change
/// to [`CROSSING_TOL`]. Works for any controller, including biased or ReLU
/// networks. Returned sorted by angle.
pub fn practical_line<C: Controller + ?Sized>(controller: &C, radius: f64) -> Vec<Crossing> {
    assert!(radius > 0.0, "radius must be positive");
    let g = |theta: f64| controller.action(State::from_polar(radius, theta));
    let step = TAU / SCAN_ANGLES as f64;
    let values: Vec<f64> = (0..SCAN_ANGLES).map(|k| g(k as f64 * step)).collect();
    let mut out = Vec::new();
    for k in 0..SCAN_ANGLES {
        let a = k as f64 * step;
        let (fa, fb) = (values[k], values[(k + 1) % SCAN_ANGLES]);
        let angle = if fa == 0.0 {
            // only count exact zeros entered from a nonzero value
            if values[(k + SCAN_ANGLES - 1) % SCAN_ANGLES] == 0.0 {
                continue;
            }
            a
        } else if fb != 0.0 && (fa < 0.0) != (fb < 0.0) {
            bisect(&g, a, a + step, fa, CROSSING_TOL)
        } else {
            continue;
        };
        let angle = angle.rem_euclid(TAU);
        out.push(Crossing {
            angle,
            state: State::from_polar(radius, angle),
        });
    }
    out.sort_by(|x, y| x.angle.total_cmp(&y.angle));
    out
}

/// Signed perpendicular distance from the practical-line crossing nearest to
/// division line `i` at `radius`, positive along `w¹ᵢ`.
pub fn line_offset(net: &PolicyNet, i: usize, radius: f64) -> Result<f64, DivisionError> {
    let w = row(net, i)?;
    let norm = w[0].hypot(w[1]);
    if norm < MIN_ROW_NORM {
        return Err(DivisionError::ZeroRow(i));
    }
    if net.is_simplified() {
        let rho_i = significance(net, i).unwrap_or(0.0);
        let best = (0..net.first_layer().nrows())
            .filter_map(|j| significance(net, j).ok())
            .fold(0.0f64, f64::max);
        if rho_i < best {
            warn!("row {i} (ρ = {rho_i:.4}) is not the most significant line (ρ = {best:.4})");
        }
    }
    practical_line(net, radius)
        .iter()
        .map(|c| (w[0] * c.state.p + w[1] * c.state.v) / norm)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .ok_or(DivisionError::NoPracticalLine(radius))
}

/// Quadrant sign of a direction's coordinates: +1 or −1 when both agree.
fn same_sign_quadrant(d: Direction) -> Option<f64> {
    if d.x > 0.0 && d.y > 0.0 {
        Some(1.0)
    } else if d.x < 0.0 && d.y < 0.0 {
        Some(-1.0)
    } else {
        None
    }
}

/// Regions where position, velocity and the commanded acceleration share a
/// sign, so the state runs away from the origin.
///
/// A region qualifies asymptotically when its representative direction and
/// saturated output agree in sign; it is reported only if every sampled state
/// of its sector inside that quadrant, at each of [`DEAD_ZONE_RADII`], agrees
/// too.
pub fn dead_zones(net: &PolicyNet) -> Result<Vec<DeadZone>, DivisionError> {
    const SAMPLES: usize = 64;
    let mut out = Vec::new();
    for region in regions(net)? {
        let Some(quadrant_sign) = same_sign_quadrant(region.representative) else {
            continue;
        };
        let asymptotic = phi_bar(net, region.representative)?;
        if crate::env::sign(asymptotic) != quadrant_sign {
            continue;
        }
        let (lo, hi) = region.angular_interval;
        let in_quadrant: Vec<f64> = (0..SAMPLES)
            .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / SAMPLES as f64)
            .filter(|&theta| same_sign_quadrant(Direction::from_angle(theta)) == Some(quadrant_sign))
            .collect();
        let confirmed = DEAD_ZONE_RADII.iter().all(|&r| {
            in_quadrant.iter().all(|&theta| {
                let a = net.forward(State::from_polar(r, theta)).unwrap_or(0.0);
                crate::env::sign(a) == quadrant_sign
            })
        });
        if confirmed {
            out.push(DeadZone {
                region,
                asymptotic_output: asymptotic,
            });
        }
    }
    Ok(out)
}
