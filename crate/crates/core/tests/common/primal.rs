//! Direct minimization of `Q.V` over `{Q : KL(Q || P) <= sigma}`, written
//! without the dual. Two-point supports reduce to a Bernoulli constraint
//! solved by bisection; larger supports split off the first coordinate
//! (chain rule of KL) and minimize the resulting convex one-dimensional
//! function of its mass.
//!
//! Three-point supports scan a 10,001-point feasible grid over the first
//! mass and refine the best cell by golden section. Four-point supports scan
//! a 101 x 101 feasible grid over the first two masses and take the smaller
//! of its minimum and a full-range nested golden-section search.

/// Points in the three-point feasible grid.
pub const GRID_POINTS: usize = 10_001;
/// Side of the four-point feasible grid (`GRID_SIDE^2 >= 1e4` points).
pub const GRID_SIDE: usize = 101;

fn xlog(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

pub fn kl_ber(x: f64, q: f64) -> f64 {
    xlog(x, q) + xlog(1.0 - x, 1.0 - q)
}

/// Smallest `x in [0, q]` with `KL(Ber(x) || Ber(q)) <= sigma`.
pub fn ber_lower(q: f64, sigma: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        // KL(Ber(x) || Ber(1)) is infinite for x < 1
        return 1.0;
    }
    if kl_ber(0.0, q) <= sigma {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, q);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kl_ber(mid, q) > sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_8;
    let mut best = f(a).min(f(b));
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
        best = best.min(fc).min(fd);
    }
    best
}

/// Feasible range of the mass on coordinate 0 of a distribution whose
/// first coordinate has reference mass `p1`.
fn first_mass_range(p1: f64, sigma: f64) -> (f64, f64) {
    (ber_lower(p1, sigma), 1.0 - ber_lower(1.0 - p1, sigma))
}

/// KL budget left for the conditional law of the remaining coordinates.
fn remaining_budget(sigma: f64, t: f64, p1: f64) -> f64 {
    ((sigma - kl_ber(t, p1)) / (1.0 - t)).max(0.0)
}

fn normalized_tail(p: &[f64]) -> Vec<f64> {
    p[1..].iter().map(|x| x / (1.0 - p[0])).collect()
}

fn grid_4(p: &[f64], v: &[f64], sigma: f64) -> f64 {
    let rest = normalized_tail(p);
    let rest2 = normalized_tail(&rest);
    let (lo, hi) = first_mass_range(p[0], sigma);
    let mut best = f64::INFINITY;
    for i in 0..GRID_SIDE {
        let t1 = lo + (hi - lo) * i as f64 / (GRID_SIDE - 1) as f64;
        if t1 >= 1.0 {
            best = best.min(v[0]);
            continue;
        }
        let b1 = remaining_budget(sigma, t1, p[0]);
        let (lo2, hi2) = first_mass_range(rest[0], b1);
        for j in 0..GRID_SIDE {
            let t2 = lo2 + (hi2 - lo2) * j as f64 / (GRID_SIDE - 1) as f64;
            let inner = if t2 >= 1.0 {
                v[1]
            } else {
                let b2 = remaining_budget(b1, t2, rest[0]);
                t2 * v[1] + (1.0 - t2) * solve(&rest2, &v[2..], b2, false)
            };
            best = best.min(t1 * v[0] + (1.0 - t1) * inner);
        }
    }
    best
}

fn solve(p: &[f64], v: &[f64], sigma: f64, grid: bool) -> f64 {
    match p.len() {
        0 => unreachable!("empty support"),
        1 => v[0],
        2 => {
            // mass t on coordinate 0; the objective is linear in t
            if v[0] >= v[1] {
                let t = ber_lower(p[0], sigma);
                t * v[0] + (1.0 - t) * v[1]
            } else {
                let t = ber_lower(p[1], sigma);
                (1.0 - t) * v[0] + t * v[1]
            }
        }
        _ => {
            let p1 = p[0];
            let rest: Vec<f64> = p[1..].iter().map(|x| x / (1.0 - p1)).collect();
            let lo = ber_lower(p1, sigma);
            let hi = 1.0 - ber_lower(1.0 - p1, sigma);
            let value = |t: f64| {
                if t >= 1.0 {
                    return v[0];
                }
                let budget = ((sigma - kl_ber(t, p1)) / (1.0 - t)).max(0.0);
                t * v[0] + (1.0 - t) * solve(&rest, &v[1..], budget, false)
            };
            if !grid {
                return golden_min(&value, lo, hi);
            }
            if p.len() == 4 {
                return grid_4(p, v, sigma).min(golden_min(&value, lo, hi));
            }
            let step = (hi - lo) / (GRID_POINTS - 1) as f64;
            let (mut best_i, mut best) = (0, f64::INFINITY);
            for i in 0..GRID_POINTS {
                let x = value(lo + step * i as f64);
                if x < best {
                    best = x;
                    best_i = i;
                }
            }
            let a = lo + step * best_i.saturating_sub(1) as f64;
            let b = (lo + step * (best_i + 1) as f64).min(hi);
            best.min(golden_min(&value, a, b))
        }
    }
}

/// `inf { Q.V : KL(Q || P) <= sigma }` over distributions on the support of `P`.
pub fn primal_inf(p: &[f64], v: &[f64], sigma: f64) -> f64 {
    let (ps, vs): (Vec<f64>, Vec<f64>) = p.iter().zip(v).filter(|(&x, _)| x > 0.0).map(|(&x, &y)| (x, y)).unzip();
    let z: f64 = ps.iter().sum();
    let ps: Vec<f64> = ps.iter().map(|x| x / z).collect();
    solve(&ps, &vs, sigma, true)
}
