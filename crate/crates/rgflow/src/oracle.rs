//! Brute-force cross-checks that are implementationally independent of the
//! production path: dense linear algebra on tiny tori, tensor Gauss–Hermite
//! quadrature of the spin integral, exact resolvent identities, and
//! finite-difference validation of the tangent flows.
//!
//! Everything here is deliberately written against closed forms and dense
//! O(N³) routines rather than the quadrature/recursion machinery it checks.

use crate::flow::FlowDriver;
use crate::kernels;
use crate::model::{QuadratureSpec, Result, RgError};
use crate::quad;

// ---------------------------------------------------------------------------
// Tiny torus
// ---------------------------------------------------------------------------

/// Dense fractional Laplacian plus mass on a one-dimensional torus of
/// `side` points: the circulant matrix with symbol (2 − 2cos θ_j)^{α/2} + m².
///
/// Rows sum to m² exactly (the zero mode carries the whole mass), and the
/// matrix is symmetric positive definite for m² > 0.
#[derive(Debug, Clone)]
pub struct TinyTorus {
    pub side: usize,
    pub alpha: f64,
    pub m2: f64,
    /// Row-major side × side entries.
    pub a: Vec<f64>,
}

impl TinyTorus {
    pub fn new(side: usize, alpha: f64, m2: f64) -> Result<Self> {
        if !(2..=8).contains(&side) {
            return Err(RgError::Domain(format!("torus side {side} not in 2..=8")));
        }
        if !(alpha > 0.0 && alpha < 2.0) || !(m2 >= 0.0) {
            return Err(RgError::Domain(format!(
                "torus parameters alpha = {alpha}, m2 = {m2} out of range"
            )));
        }
        let beta = alpha / 2.0;
        let n = side as f64;
        let mut a = vec![0.0; side * side];
        for x in 0..side {
            for y in 0..side {
                let mut v = 0.0;
                for j in 0..side {
                    let theta = 2.0 * std::f64::consts::PI * j as f64 / n;
                    let lam = 2.0 - 2.0 * theta.cos();
                    let sym = if j == 0 { 0.0 } else { lam.powf(beta) };
                    v += (sym + m2) * (theta * (x as f64 - y as f64)).cos();
                }
                a[x * side + y] = v / n;
            }
        }
        Ok(TinyTorus { side, alpha, m2, a })
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.a[x * self.side + y]
    }

    pub fn row_sum(&self, x: usize) -> f64 {
        self.a[x * self.side..(x + 1) * self.side].iter().sum()
    }

    /// Dense inverse by Gauss–Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Vec<f64>> {
        invert_dense(&self.a, self.side)
    }

    /// Lower-triangular Cholesky factor; fails if not positive definite.
    pub fn cholesky(&self) -> Result<Vec<f64>> {
        let n = self.side;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(RgError::Domain(format!(
                            "torus matrix not positive definite at pivot {i} (s = {s:.3e})"
                        )));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(l)
    }
}

/// Gauss–Jordan inverse with partial pivoting; singular matrices error out.
fn invert_dense(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let (mut piv, mut best) = (col, m[col * n + col].abs());
        for r in col + 1..n {
            if m[r * n + col].abs() > best {
                piv = r;
                best = m[r * n + col].abs();
            }
        }
        if best < 1e-300 {
            return Err(RgError::Domain(format!("singular matrix at column {col}")));
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[r * n + k] -= f * m[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Ok(inv)
}

/// Free-field susceptibility from the dense inverse: Σ_x ((−Δ)^{α/2}+ν)^{-1}_{0x}
/// together with the exact value 1/ν it must reproduce.
pub fn g0_chi_check(tiny: &TinyTorus) -> Result<(f64, f64)> {
    if !(tiny.m2 > 0.0) {
        return Err(RgError::Domain(format!(
            "free-field check needs nu > 0, got {}",
            tiny.m2
        )));
    }
    let inv = tiny.inverse()?;
    let chi: f64 = inv[0..tiny.side].iter().sum();
    Ok((chi, 1.0 / tiny.m2))
}

// ---------------------------------------------------------------------------
// Random-walk (Neumann series) representation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct WalkReport {
    /// Power-iteration estimate of the spectral radius of U⁻¹J.
    pub spectral_radius: f64,
    /// Neumann terms accumulated before the remainder fell below 1e−18.
    pub terms: usize,
    /// Max entrywise deviation from the dense inverse.
    pub max_deviation: f64,
}

/// Check the walk representation (U − J)⁻¹ = Σ_k (U⁻¹J)^k U⁻¹ for the
/// operator (−Δ)^{α/2} + diag(d) on the torus, against the dense inverse.
pub fn walk_representation_check(tiny: &TinyTorus, diag: &[f64]) -> Result<WalkReport> {
    let n = tiny.side;
    if diag.len() != n {
        return Err(RgError::Domain(format!(
            "diagonal has {} entries for side {n}",
            diag.len()
        )));
    }
    if let Some(d) = diag.iter().find(|d| !(**d > 0.0)) {
        return Err(RgError::Domain(format!(
            "walk representation needs positive diagonal, got {d}"
        )));
    }
    // M = Laplacian part of the torus + diag(d); U its diagonal, J = U − M.
    let mut m = tiny.a.clone();
    for i in 0..n {
        m[i * n + i] += diag[i] - tiny.m2;
    }
    let mut u = vec![0.0; n];
    let mut t = vec![0.0; n * n]; // U⁻¹J
    for i in 0..n {
        u[i] = m[i * n + i];
        for j in 0..n {
            if i != j {
                t[i * n + j] = -m[i * n + j] / u[i];
            }
        }
    }
    // Spectral radius of |T| by power iteration (an upper proxy for ρ(T)).
    let mut v = vec![1.0; n];
    let mut rho = 0.0;
    for _ in 0..200 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                w[i] += t[i * n + j].abs() * v[j];
            }
        }
        let norm = w.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        rho = norm / v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    if rho >= 1.0 - 1e-12 {
        return Err(RgError::Domain(format!(
            "walk series diverges: spectral radius estimate {rho:.6}"
        )));
    }
    // Neumann accumulation S = Σ (U⁻¹J)^k U⁻¹, term-by-term in matrix form.
    let mut term = vec![0.0; n * n];
    for i in 0..n {
        term[i * n + i] = 1.0 / u[i];
    }
    let mut s = term.clone();
    let mut terms = 1usize;
    for _ in 0..100_000 {
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let tik = t[i * n + k];
                if tik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    next[i * n + j] += tik * term[k * n + j];
                }
            }
        }
        let mag = next.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (si, ni) in s.iter_mut().zip(&next) {
            *si += ni;
        }
        term = next;
        terms += 1;
        if mag < 1e-18 {
            break;
        }
    }
    let inv = invert_dense(&m, n)?;
    let max_deviation = s
        .iter()
        .zip(&inv)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(WalkReport {
        spectral_radius: rho,
        terms,
        max_deviation,
    })
}

// ---------------------------------------------------------------------------
// Spin-integral quadrature (n = 1)
// ---------------------------------------------------------------------------

/// Nodes per site giving a roughly constant tensor budget across sides.
pub fn default_spin_nodes(side: usize) -> usize {
    match side {
        0..=4 => 40,
        5 => 18,
        6 => 12,
        7 => 9,
        _ => 7,
    }
}

/// Susceptibility of the single-component quartic model on a tiny torus by
/// tensor Gauss–Hermite quadrature.
///
/// The Gaussian factor is extracted at the torus's own mass m² (the caller's
/// split), leaving exp(−Σ_x [g φ_x⁴/4 + (ν − m²) φ_x²/2]) to the nodes; the
/// result is split-independent because the total weight is. χ is measured as
/// ⟨(Σφ)²⟩/side = Σ_x ⟨φ₀φ_x⟩.
pub fn tiny_torus_chi_quadrature(
    tiny: &TinyTorus,
    g: f64,
    nu: f64,
    nodes: usize,
) -> Result<f64> {
    if tiny.side > 8 {
        return Err(RgError::Domain(format!(
            "spin integral dimension {} exceeds the cap 8",
            tiny.side
        )));
    }
    if !(g >= 0.0) {
        return Err(RgError::Domain(format!("quartic coupling g = {g} < 0")));
    }
    let n = tiny.side;
    let l = tiny.cholesky()?;
    let (t_nodes, t_weights) = quad::gauss_hermite(nodes);
    // Probabilists' scaling: z = √2 t; the constant Jacobian cancels in the
    // ratio, as do the Gaussian normalisations.
    let z_nodes: Vec<f64> = t_nodes.iter().map(|t| std::f64::consts::SQRT_2 * t).collect();
    let dnu = nu - tiny.m2;

    let mut idx = vec![0usize; n];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut z = vec![0.0; n];
    let mut phi = vec![0.0; n];
    loop {
        let mut wbase = 1.0;
        for (slot, &i) in idx.iter().enumerate() {
            z[slot] = z_nodes[i];
            wbase *= t_weights[i];
        }
        // Solve Lᵀ φ = z so that φᵀAφ = zᵀz.
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= l[k * n + i] * phi[k];
            }
            phi[i] = s / l[i * n + i];
        }
        let mut v = 0.0;
        let mut tot = 0.0;
        for &p in &phi {
            v += 0.25 * g * p * p * p * p + 0.5 * dnu * p * p;
            tot += p;
        }
        let w = wbase * (-v).exp();
        num += w * tot * tot;
        den += w;

        // Odometer over the tensor grid.
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < nodes {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == n {
                let chi = num / den / n as f64;
                if !chi.is_finite() {
                    return Err(RgError::Quadrature(
                        "spin integral produced a non-finite ratio".into(),
                    ));
                }
                return Ok(chi);
            }
        }
    }
}

/// Spin-integral χ with a node-doubling convergence check.
pub fn chi_quadrature_checked(
    tiny: &TinyTorus,
    g: f64,
    nu: f64,
    nodes: usize,
    tol: f64,
) -> Result<f64> {
    let coarse = tiny_torus_chi_quadrature(tiny, g, nu, nodes)?;
    let fine = tiny_torus_chi_quadrature(tiny, g, nu, 2 * nodes)?;
    let dev = (coarse - fine).abs() / (1.0 + fine.abs());
    if dev > tol {
        return Err(RgError::NoConvergence {
            what: format!("spin quadrature under node doubling ({nodes} → {})", 2 * nodes),
            iterations: 2 * nodes,
            residual: dev,
        });
    }
    Ok(fine)
}

// ---------------------------------------------------------------------------
// Resolvent identities
// ---------------------------------------------------------------------------

/// Exact d = 1 lattice resolvent (−Δ + s)^{-1}_{0x} = ω^{|x|}/√(s(s+4)),
/// ω = (s + 2 − √(s(s+4)))/2, written in the rationalized form
/// ω = 2/(s + 2 + √(s(s+4))) that stays accurate for s ≫ 1 (the direct
/// difference cancels catastrophically there).
pub fn resolvent_1d_exact(s: f64, x: i64) -> f64 {
    let root = (s * (s + 4.0)).sqrt();
    let omega = 2.0 / (s + 2.0 + root);
    omega.powi(x.unsigned_abs() as i32) / root
}

/// Spectral density of t ↦ 1/(t^β + m²), written locally so the identity
/// check does not share code with the production ρ-mesh.
fn spectral_density(s: f64, m2: f64, beta: f64) -> f64 {
    let sb = s.powf(beta);
    let (sin_pb, cos_pb) = (std::f64::consts::PI * beta).sin_cos();
    sin_pb / std::f64::consts::PI * sb / (sb * sb + 2.0 * m2 * sb * cos_pb + m2 * m2)
}

/// ∫₀^∞ f(s) ds by adaptive Simpson in log s.
///
/// The core region is seeded around s ≈ 1 plus any `interior` structure
/// scales (mass transitions, pole positions); both tails are then extended
/// outward in fixed-width log chunks until two consecutive chunks contribute
/// less than `rel_tol` of the running total, so no a-priori decay-rate
/// analysis is needed. Simpson tolerances are scaled to the sampled
/// integrand magnitude.
fn log_adaptive_integral<F: Fn(f64) -> f64>(f: F, interior: &[f64], rel_tol: f64) -> f64 {
    let g = |u: f64| {
        let s = u.exp();
        s * f(s)
    };
    let mut edges: Vec<f64> = vec![-10.0, -5.0, 0.0, 5.0, 10.0];
    for &s in interior {
        if s.is_finite() && s > 0.0 {
            let u = s.ln();
            edges.extend_from_slice(&[u - 2.0, u, u + 2.0]);
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 0.5);
    let mag = edges
        .windows(2)
        .flat_map(|w| [w[0], 0.5 * (w[0] + w[1])])
        .chain([*edges.last().unwrap()])
        .map(|u| g(u).abs())
        .fold(0.0f64, f64::max);
    let tol = (rel_tol * mag).max(1e-280);

    let mut acc = 0.0;
    for w in edges.windows(2) {
        acc += quad::adaptive_simpson(&g, w[0], w[1], tol);
    }
    // Outward tail extension; chunks of width 10 in log s.
    for dir in [-1.0, 1.0] {
        let mut u = if dir < 0.0 {
            edges[0]
        } else {
            *edges.last().unwrap()
        };
        let mut quiet = 0;
        while u.abs() < 600.0 && quiet < 2 {
            let (a, b) = if dir < 0.0 { (u - 10.0, u) } else { (u, u + 10.0) };
            let v = quad::adaptive_simpson(&g, a, b, tol);
            acc += v;
            u += dir * 10.0;
            if v.abs() <= rel_tol * acc.abs() {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
    }
    acc
}

#[derive(Debug, Clone, Copy)]
pub struct CovIntReport {
    pub x: i64,
    /// Production-path fractional resolvent entry.
    pub direct: f64,
    /// Independent spectral route ∫ (−Δ+s)^{-1}_{0x} ρ(s, m²) ds.
    pub integral: f64,
    pub deviation: f64,
    /// Whether `deviation` is relative (false once |direct| < 1e−14, where
    /// the absolute criterion applies).
    pub relative: bool,
}

/// Check the subordination identity ((−Δ)^{α/2}+m²)^{-1}_{0x} =
/// ∫ (−Δ+s)^{-1}_{0x} ρ(s,m²) ds at the listed displacements (d = 1).
pub fn covint_identity_check(
    alpha: f64,
    m2: f64,
    xs: &[i64],
    q: &QuadratureSpec,
) -> Result<Vec<CovIntReport>> {
    let beta = alpha / 2.0;
    if !(beta > 0.0 && beta < 0.5) {
        return Err(RgError::Domain(format!(
            "spectral identity check needs alpha/2 in (0, 1/2), got {beta}"
        )));
    }
    // Transition scale where s^β overtakes m².
    let s_mass = if m2 > 0.0 { m2.powf(1.0 / beta) } else { 0.0 };
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let direct = kernels::frac_resolvent_entry(1, beta, m2, &[x], q);
        let integral = log_adaptive_integral(
            |s| resolvent_1d_exact(s, x) * spectral_density(s, m2, beta),
            &[s_mass],
            1e-11,
        );
        let (deviation, relative) = if direct.abs() >= 1e-14 {
            ((direct - integral).abs() / direct.abs(), true)
        } else {
            ((direct - integral).abs(), false)
        };
        out.push(CovIntReport {
            x,
            direct,
            integral,
            deviation,
            relative,
        });
    }
    Ok(out)
}

/// Scalar Stieltjes identity 1/(t^β + a) = ∫ ρ^{(β)}(s, a)/(t + s) ds,
/// evaluated with the production density and an independent integrator.
/// Returns (closed form, integral, relative deviation).
pub fn stieltjes_identity_check(beta: f64, t: f64, a: f64) -> Result<(f64, f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) || !(t > 0.0) || !(a > 0.0) {
        return Err(RgError::Domain(format!(
            "stieltjes check needs beta in (0,1), t > 0, a > 0; got ({beta}, {t}, {a})"
        )));
    }
    let lhs = 1.0 / (t.powf(beta) + a);
    let s_mass = a.powf(1.0 / beta);
    let rhs = log_adaptive_integral(
        |s| quad::rho_weight(s, a, beta) / (t + s),
        &[s_mass, t],
        1e-11,
    );
    Ok((lhs, rhs, (lhs - rhs).abs() / lhs.abs()))
}

// ---------------------------------------------------------------------------
// Finite-difference derivative checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub h: f64,
    /// Richardson-extrapolated central difference of the first output.
    pub first_fd: f64,
    pub first_tangent: f64,
    pub first_rel: f64,
    /// Richardson-extrapolated second central difference of the second output.
    pub second_fd: f64,
    pub second_tangent: f64,
    pub second_rel: f64,
}

/// Compare analytic tangent predictions against Richardson-extrapolated
/// central differences of a scalar-parameter pipeline. `f` returns the pair
/// (first-derivative target, second-derivative target) — e.g. (ν_∞, u_∞).
pub fn fd_derivative_check<F>(
    f: F,
    base: f64,
    h: f64,
    first_tangent: f64,
    second_tangent: f64,
) -> Result<FdReport>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let (_, u0) = f(base)?;
    let (np_h, up_h) = f(base + h)?;
    let (nm_h, um_h) = f(base - h)?;
    let (np_h2, up_h2) = f(base + 0.5 * h)?;
    let (nm_h2, um_h2) = f(base - 0.5 * h)?;

    let d_h = (np_h - nm_h) / (2.0 * h);
    let d_h2 = (np_h2 - nm_h2) / h;
    let first_fd = (4.0 * d_h2 - d_h) / 3.0;

    let s_h = (up_h - 2.0 * u0 + um_h) / (h * h);
    let s_h2 = (up_h2 - 2.0 * u0 + um_h2) / (0.25 * h * h);
    let second_fd = (4.0 * s_h2 - s_h) / 3.0;

    let rel = |fd: f64, tan: f64| {
        let scale = tan.abs().max(1e-30);
        (fd - tan).abs() / scale
    };
    Ok(FdReport {
        h,
        first_fd,
        first_tangent,
        first_rel: rel(first_fd, first_tangent),
        second_fd,
        second_tangent,
        second_rel: if second_tangent == 0.0 && second_fd.abs() < 1e-10 {
            0.0
        } else {
            rel(second_fd, second_tangent)
        },
    })
}

/// Run the full flow pipeline as a function of ν₀ at fixed g and compare
/// dν_∞/dν₀ with the order-1 tangent and d²u_∞/dν₀² with the accumulated
/// second tangent.
pub fn pipeline_fd_check(driver: &FlowDriver, g: f64, nu0: f64, h: f64) -> Result<FdReport> {
    let eta0 = driver.table.at(0).eta_geq;
    let y0 = driver.sbar() - g;
    let run = |nu: f64| -> Result<(f64, f64)> {
        let mut rec = driver.flow_below(nu + eta0 * g, y0)?;
        if let Some((j, what)) = &rec.diverged {
            return Err(RgError::FlowDiverged {
                scale: *j,
                quantity: what.clone(),
            });
        }
        let nu_inf = driver.flow_above(&mut rec)?;
        Ok((nu_inf, rec.last().state.u))
    };
    let mut base = driver.flow_below(nu0 + eta0 * g, y0)?;
    driver.flow_above(&mut base)?;
    driver.tangent_flow(&mut base, 2)?;
    let u2 = driver.u_second_flow(&mut base)?;
    let tangents = base.tangents.as_ref().expect("tangents just computed");
    let nu1 = tangents.last().expect("nonempty").nu1;
    fd_derivative_check(run, nu0, h, nu1, u2)
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

fn outcome(name: &str, deviation: f64, tolerance: f64, detail: String) -> OracleOutcome {
    OracleOutcome {
        name: name.into(),
        deviation,
        tolerance,
        pass: deviation <= tolerance && deviation.is_finite(),
        detail,
    }
}

/// The standard oracle battery (everything that does not need a tuned flow):
/// free-field susceptibility, walk representation, spin-integral Gaussian
/// limit and split invariance, subordination identity, scalar Stieltjes
/// identity. Returns one outcome per check.
pub fn standard_ledger(alpha: f64, q: &QuadratureSpec) -> Result<Vec<OracleOutcome>> {
    let mut out = Vec::new();

    for (side, nu) in [(4usize, 0.5f64), (8, 0.25), (5, 1.0)] {
        let tiny = TinyTorus::new(side, 0.6, nu)?;
        let (chi, expect) = g0_chi_check(&tiny)?;
        out.push(outcome(
            &format!("g0_chi side={side} nu={nu}"),
            (chi - expect).abs() / expect,
            1e-12,
            format!("chi = {chi:.15e}, expected {expect:.15e}"),
        ));
    }

    let tiny = TinyTorus::new(5, alpha, 0.0)?;
    let diag = [0.7, 1.3, 0.2, 2.1, 0.9];
    let walk = walk_representation_check(&tiny, &diag)?;
    out.push(outcome(
        "walk_representation side=5",
        walk.max_deviation,
        1e-10,
        format!(
            "spectral radius {:.4}, {} terms",
            walk.spectral_radius, walk.terms
        ),
    ));

    // Gaussian limit: g = 0 with an off-split mass still means a Gaussian
    // integrand for the nodes; χ must match the dense inverse value 1/ν.
    let nu = 0.8;
    let split_a = TinyTorus::new(4, alpha, nu)?;
    let split_b = TinyTorus::new(4, alpha, 0.6 * nu)?;
    let chi_gauss = tiny_torus_chi_quadrature(&split_a, 0.0, nu, 40)?;
    out.push(outcome(
        "spin_quadrature g=0 limit",
        (chi_gauss - 1.0 / nu).abs() * nu,
        1e-10,
        format!("chi = {chi_gauss:.12e} vs 1/nu = {:.12e}", 1.0 / nu),
    ));
    let chi_a = chi_quadrature_checked(&split_a, 1e-3, nu, 40, 1e-9)?;
    let chi_b = chi_quadrature_checked(&split_b, 1e-3, nu, 40, 1e-9)?;
    out.push(outcome(
        "spin_quadrature split invariance",
        (chi_a - chi_b).abs() / chi_a.abs(),
        1e-8,
        format!("split nu: {chi_a:.12e}, split 0.6nu: {chi_b:.12e}"),
    ));

    let reports = covint_identity_check(0.6, 0.1, &[0, 1, 5, 20], q)?;
    let worst = reports
        .iter()
        .map(|r| r.deviation)
        .fold(0.0f64, f64::max);
    out.push(outcome(
        "covariance integral identity alpha=0.6 m2=0.1",
        worst,
        1e-6,
        format!(
            "x=0 direct {:.9e} integral {:.9e}",
            reports[0].direct, reports[0].integral
        ),
    ));

    let mut worst = 0.0f64;
    let mut detail = String::new();
    for &beta in &[0.255, 0.3, 0.45] {
        for &t in &[1e-3, 0.5, 7.0] {
            for &a in &[1e-4, 0.2, 3.0] {
                let (_, _, rel) = stieltjes_identity_check(beta, t, a)?;
                if rel > worst {
                    worst = rel;
                    detail = format!("worst at (beta, t, a) = ({beta}, {t}, {a})");
                }
            }
        }
    }
    out.push(outcome(
        "stieltjes identity 27 samples",
        worst,
        1e-6,
        detail,
    ));

    Ok(out)
}
