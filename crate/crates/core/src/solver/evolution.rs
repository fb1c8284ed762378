use crate::banded::BandedLu;
use crate::error::{Error, Result};
use crate::geometry::WarpModel;
use crate::scalar::Scalar;
use crate::solver::discretization::{build_discretization, Discretization};
use crate::solver::grid::RadialGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState<T> {
    pub t: T,
    pub u: Vec<T>,
    pub step_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T> {
    pub mass: T,
    pub l2_norm: T,
    pub linf_norm: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics<T> {
    pub step: usize,
    pub t: T,
    pub mass: T,
    pub l2_norm: T,
    pub linf_norm: T,
}

/// Time stepping plan. Output times snap to the nearest multiple of `dt`.
///
/// The first `startup_steps` steps are each taken as two implicit Euler half
/// steps, which damps the grid-scale content of rough initial data that the
/// Crank–Nicolson factor `(1 - dtλ/2)/(1 + dtλ/2) → -1` would otherwise keep.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    pub dt: T,
    pub t_end: T,
    pub output_times: Vec<T>,
    pub theta: T,
    pub startup_steps: usize,
}

impl<T: Scalar> Schedule<T> {
    pub fn new(dt: T, t_end: T, output_times: Vec<T>, theta: T) -> Self {
        Self { dt, t_end, output_times, theta, startup_steps: 0 }
    }

    pub fn with_startup(mut self, steps: usize) -> Self {
        self.startup_steps = steps;
        self
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round().to_usize().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::Invalid(format!("dt = {} must be > 0", self.dt.as_f64())));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(Error::Invalid(format!("t_end = {} must be >= 0", self.t_end.as_f64())));
        }
        check_theta(self.theta)?;
        if let Some(t) =
            self.output_times.iter().find(|t| !(**t >= T::zero()) || **t > self.t_end + self.dt / T::lit(2.0))
        {
            return Err(Error::Invalid(format!("output time {} outside [0, t_end]", t.as_f64())));
        }
        Ok(())
    }
}

fn check_theta<T: Scalar>(theta: T) -> Result<()> {
    if !(theta >= T::lit(0.5) && theta <= T::one()) {
        return Err(Error::Invalid(format!("theta = {} outside [1/2, 1]", theta.as_f64())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    /// Initial state followed by the states at the snapped output times.
    pub states: Vec<EvolutionState<T>>,
    /// `(requested time, step index)` for each output time.
    pub output_map: Vec<(T, usize)>,
    /// One record per step, starting with step 0.
    pub diagnostics: Vec<StepDiagnostics<T>>,
    /// Largest ratio of rim magnitude to field magnitude seen over the run.
    pub boundary_ratio: T,
    /// `∫ boundary_flux dt` accumulated with the scheme's own time weights;
    /// `mass(0) - mass(t)` equals this up to round-off.
    pub boundary_flux: T,
}

impl<T: Scalar> Trajectory<T> {
    /// Stored state closest to time `t`.
    pub fn state_near(&self, t: T) -> &EvolutionState<T> {
        self.states
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("trajectory holds the initial state")
    }

    pub fn last(&self) -> &EvolutionState<T> {
        self.states.last().expect("trajectory holds the initial state")
    }
}

pub fn diagnose<T: Scalar>(disc: &Discretization<T>, u: &[T]) -> Diagnostics<T> {
    Diagnostics {
        mass: disc.mass(u),
        l2_norm: disc.l2_norm(u),
        linf_norm: u.iter().fold(T::zero(), |m, &x| m.max(x.abs())),
    }
}

/// Factored θ-scheme `(I + θ dt B) u⁺ = (I - (1-θ) dt B) u`, solved for the
/// increment `δ = u⁺ - u` from `(I + θ dt B) δ = -dt B u` so that solve
/// round-off scales with `δ` rather than with `u`.
#[derive(Debug, Clone)]
pub struct Stepper<'a, T> {
    disc: &'a Discretization<T>,
    dt: T,
    theta: T,
    lhs: BandedLu<T>,
}

impl<'a, T: Scalar> Stepper<'a, T> {
    pub fn new(disc: &'a Discretization<T>, dt: T, theta: T) -> Result<Self> {
        check_theta(theta)?;
        if !(dt > T::zero()) {
            return Err(Error::Invalid(format!("dt = {} must be > 0", dt.as_f64())));
        }
        let lhs = disc.bilaplacian.scaled_plus_identity(theta * dt, T::one()).factor()?;
        Ok(Self { disc, dt, theta, lhs })
    }

    pub fn advance(&self, u: &[T]) -> Vec<T> {
        let rhs: Vec<T> = self.disc.apply_bilaplacian(u).into_iter().map(|b| -self.dt * b).collect();
        let mut delta = self.lhs.solve(&rhs);
        // one refinement pass against the flux-form operator
        let bd = self.disc.apply_bilaplacian(&delta);
        let mut res: Vec<T> =
            rhs.iter().zip(&delta).zip(&bd).map(|((&r, &d), &b)| r - d - self.theta * self.dt * b).collect();
        self.lhs.solve_in_place(&mut res);
        for (d, c) in delta.iter_mut().zip(&res) {
            *d = *d + *c;
        }
        u.iter().zip(&delta).map(|(&a, &d)| a + d).collect()
    }

    /// Boundary flux of the step `u → next`, times `dt`.
    fn flux(&self, u: &[T], next: &[T]) -> T {
        let avg: Vec<T> = u.iter().zip(next).map(|(&a, &b)| self.theta * b + (T::one() - self.theta) * a).collect();
        self.dt * self.disc.boundary_flux(&avg)
    }
}

/// One θ-step from `state`.
pub fn step<T: Scalar>(
    disc: &Discretization<T>,
    state: &EvolutionState<T>,
    dt: T,
    theta: T,
) -> Result<EvolutionState<T>> {
    let stepper = Stepper::new(disc, dt, theta)?;
    let u = stepper.advance(&state.u);
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(state.step_index + 1));
    }
    Ok(EvolutionState { t: state.t + dt, u, step_index: state.step_index + 1 })
}

pub fn run<T: Scalar>(
    model: &WarpModel<T>,
    grid: &RadialGrid<T>,
    init: &[T],
    schedule: &Schedule<T>,
) -> Result<Trajectory<T>> {
    let disc = build_discretization(model, grid)?;
    run_with(&disc, init, schedule)
}

fn rim_ratio<T: Scalar>(rim: &[usize], u: &[T]) -> T {
    let top = u.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if top == T::zero() {
        return T::zero();
    }
    rim.iter().fold(T::zero(), |m, &i| m.max(u[i].abs())) / top
}

/// Runs `schedule` on a prebuilt discretization. Clamped nodes of `init` are zeroed.
pub fn run_with<T: Scalar>(disc: &Discretization<T>, init: &[T], schedule: &Schedule<T>) -> Result<Trajectory<T>> {
    schedule.validate()?;
    if init.len() != disc.len() {
        return Err(Error::Invalid(format!("initial field has {} values for {} nodes", init.len(), disc.len())));
    }
    if init.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let steps = schedule.step_count();
    let dt = schedule.dt;
    let mut output_map: Vec<(T, usize)> =
        schedule.output_times.iter().map(|&t| (t, (t / dt).round().to_usize().unwrap_or(0).min(steps))).collect();
    output_map.sort_by_key(|a| a.1);
    let mut wanted: Vec<usize> = output_map.iter().map(|p| p.1).filter(|&k| k > 0).collect();
    wanted.dedup();

    let mut u = init.to_vec();
    disc.project(&mut u);
    let rim = disc.rim_nodes();
    let record = |k: usize, u: &[T]| {
        let d = diagnose(disc, u);
        StepDiagnostics {
            step: k,
            t: T::from_usize_lossy(k) * dt,
            mass: d.mass,
            l2_norm: d.l2_norm,
            linf_norm: d.linf_norm,
        }
    };
    let mut diagnostics = vec![record(0, &u)];
    let mut states = vec![EvolutionState { t: T::zero(), u: u.clone(), step_index: 0 }];
    let mut boundary_ratio = rim_ratio(&rim, &u);
    let mut boundary_flux = T::zero();
    if steps == 0 {
        return Ok(Trajectory { states, output_map, diagnostics, boundary_ratio, boundary_flux });
    }

    let main = Stepper::new(disc, dt, schedule.theta)?;
    let startup = if schedule.startup_steps > 0 { Some(Stepper::new(disc, dt / T::lit(2.0), T::one())?) } else { None };
    let mut next_out = 0;
    for k in 1..=steps {
        let next = match (&startup, k <= schedule.startup_steps) {
            (Some(s), true) => {
                let mid = s.advance(&u);
                let end = s.advance(&mid);
                boundary_flux = boundary_flux + s.flux(&u, &mid) + s.flux(&mid, &end);
                end
            }
            _ => {
                let end = main.advance(&u);
                boundary_flux = boundary_flux + main.flux(&u, &end);
                end
            }
        };
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        u = next;
        diagnostics.push(record(k, &u));
        boundary_ratio = boundary_ratio.max(rim_ratio(&rim, &u));
        if next_out < wanted.len() && wanted[next_out] == k {
            states.push(EvolutionState { t: T::from_usize_lossy(k) * dt, u: u.clone(), step_index: k });
            next_out += 1;
        }
    }
    Ok(Trajectory { states, output_map, diagnostics, boundary_ratio, boundary_flux })
}

/// Smooth bump `exp(-1/(1-s²))`, `s = (r - center)/(4 width)`, scaled to unit
/// discrete mass. Support is `[center - 4 width, center + 4 width]`.
pub fn delta_init<T: Scalar>(disc: &Discretization<T>, center: T, width: T) -> Result<Vec<T>> {
    let g = &disc.grid;
    let min = T::lit(4.0) * g.h;
    if !(width >= min * (T::one() - T::lit(1e-9))) {
        return Err(Error::WidthTooSmall { width: width.as_f64(), min: min.as_f64() });
    }
    let margin = T::lit(5.0) * width;
    if g.boundary.right_clamped() && center + margin > g.r_max {
        return Err(Error::Domain(format!("bump at {} too close to the outer boundary", center.as_f64())));
    }
    if g.boundary.left_clamped() && center - margin < g.r_min {
        return Err(Error::Domain(format!("bump at {} too close to the inner boundary", center.as_f64())));
    }
    let four = T::lit(4.0);
    let mut u: Vec<T> = disc
        .nodes()
        .iter()
        .map(|&r| {
            let s = (r - center) / (four * width);
            if s.abs() < T::one() {
                (-T::one() / (T::one() - s * s)).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    disc.project(&mut u);
    let m = disc.mass(&u);
    if !(m > T::zero()) {
        return Err(Error::Domain("bump has no mass on the grid".into()));
    }
    for x in u.iter_mut() {
        *x = *x / m;
    }
    Ok(u)
}

/// Width-extrapolated point mass `(4 u_w - u_{2w})/3`, cancelling the `O(w²)`
/// smoothing error of a single bump. Still has unit mass.
pub fn delta_init_extrapolated<T: Scalar>(disc: &Discretization<T>, center: T, width: T) -> Result<Vec<T>> {
    let a = delta_init(disc, center, width)?;
    let b = delta_init(disc, center, width + width)?;
    let three = T::lit(3.0);
    Ok(a.iter().zip(&b).map(|(&x, &y)| (T::lit(4.0) * x - y) / three).collect())
}
