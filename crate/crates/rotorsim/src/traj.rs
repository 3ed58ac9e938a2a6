//! Reference trajectories: per-axis minimum-jerk quintics, circles with a
//! min-jerk lead-in, and hover.
//!
//! The quintic coefficients come from the closed-form solution of the
//! fixed-endpoint minimum-jerk problem: with `dp`, `dv`, `da` the end-state
//! mismatches after removing free drift,
//!
//! ```text
//! alpha = ( 720 dp - 360 T dv + 60 T^2 da) / T^5
//! beta  = (-360 T dp + 168 T^2 dv - 24 T^3 da) / T^5
//! gamma = (  60 T^2 dp - 24 T^3 dv + 3 T^4 da) / T^5
//! ```
//!
//! and the position is `p0 + v0 t + a0 t^2/2 + gamma t^3/6 + beta t^4/24 +
//! alpha t^5/120`. Sampling beyond the duration holds the final position
//! with zero velocity and acceleration.

use nalgebra::Vector3;
use rand::Rng;

use crate::SimError;

/// Reference sample: position, velocity, acceleration at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefSample {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub acc: Vector3<f64>,
}

impl RefSample {
    pub fn hover(pos: Vector3<f64>) -> Self {
        Self { pos, vel: Vector3::zeros(), acc: Vector3::zeros() }
    }
}

#[derive(Clone, Copy, Debug)]
struct AxisQuintic {
    p0: f64,
    v0: f64,
    a0: f64,
    gamma: f64,
    beta: f64,
    alpha: f64,
}

impl AxisQuintic {
    fn solve(p0: f64, v0: f64, a0: f64, pf: f64, vf: f64, af: f64, t: f64) -> Self {
        let dp = pf - p0 - v0 * t - 0.5 * a0 * t * t;
        let dv = vf - v0 - a0 * t;
        let da = af - a0;
        let t2 = t * t;
        let t5 = t2 * t2 * t;
        let alpha = (720.0 * dp - 360.0 * t * dv + 60.0 * t2 * da) / t5;
        let beta = (-360.0 * t * dp + 168.0 * t2 * dv - 24.0 * t2 * t * da) / t5;
        let gamma = (60.0 * t2 * dp - 24.0 * t2 * t * dv + 3.0 * t2 * t2 * da) / t5;
        Self { p0, v0, a0, gamma, beta, alpha }
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (t2, t3) = (t * t, t * t * t);
        let p = self.p0
            + self.v0 * t
            + 0.5 * self.a0 * t2
            + self.gamma * t3 / 6.0
            + self.beta * t2 * t2 / 24.0
            + self.alpha * t2 * t3 / 120.0;
        let v = self.v0
            + self.a0 * t
            + 0.5 * self.gamma * t2
            + self.beta * t3 / 6.0
            + self.alpha * t2 * t2 / 24.0;
        let a = self.a0 + self.gamma * t + 0.5 * self.beta * t2 + self.alpha * t3 / 6.0;
        (p, v, a)
    }

    /// Integral of squared jerk over `[0, t]`, closed form.
    fn jerk_cost(&self, t: f64) -> f64 {
        let (g, b, a) = (self.gamma, self.beta, self.alpha);
        let t2 = t * t;
        g * g * t
            + g * b * t2
            + (b * b + g * a) * t2 * t / 3.0
            + a * b * t2 * t2 / 4.0
            + a * a * t2 * t2 * t / 20.0
    }
}

/// Three-axis minimum-jerk trajectory over a fixed duration.
#[derive(Clone, Debug)]
pub struct Trajectory {
    axes: [AxisQuintic; 3],
    duration: f64,
    end: RefSample,
}

impl Trajectory {
    pub fn generate(start: RefSample, end: RefSample, duration: f64) -> Result<Self, SimError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SimError::InvalidDuration(duration));
        }
        let all = [start, end];
        if all.iter().any(|s| {
            !(s.pos.iter().chain(s.vel.iter()).chain(s.acc.iter())).all(|x| x.is_finite())
        }) {
            return Err(SimError::NonFinite("trajectory end states"));
        }
        let axes = [0, 1, 2].map(|i| {
            AxisQuintic::solve(
                start.pos[i],
                start.vel[i],
                start.acc[i],
                end.pos[i],
                end.vel[i],
                end.acc[i],
                duration,
            )
        });
        Ok(Self { axes, duration, end })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn sample(&self, t: f64) -> RefSample {
        if t >= self.duration {
            return RefSample::hover(self.end.pos);
        }
        let t = t.max(0.0);
        let mut s = RefSample::hover(Vector3::zeros());
        for i in 0..3 {
            let (p, v, a) = self.axes[i].eval(t);
            s.pos[i] = p;
            s.vel[i] = v;
            s.acc[i] = a;
        }
        s
    }

    /// Total squared-jerk cost over the trajectory duration.
    pub fn jerk_cost(&self) -> f64 {
        self.axes.iter().map(|a| a.jerk_cost(self.duration)).sum()
    }
}

/// End-state sampling box for random references.
#[derive(Clone, Copy, Debug)]
pub struct TrajectorySpec {
    /// Per-axis end position bound, m (uniform in `[-b, b]`).
    pub pos_bound: f64,
    /// Per-axis end velocity bound, m/s.
    pub vel_bound: f64,
    /// Per-axis end acceleration bound, m/s^2.
    pub acc_bound: f64,
    /// Duration interval, s.
    pub duration: crate::vehicle::Range,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            pos_bound: 2.0,
            vel_bound: 2.0,
            acc_bound: 2.0,
            duration: crate::vehicle::Range::new(1.0, 5.0),
        }
    }
}

impl TrajectorySpec {
    /// Evaluation protocol: full-length trajectories.
    pub fn testing() -> Self {
        Self { duration: crate::vehicle::Range::new(5.0, 5.0), ..Self::default() }
    }

    /// Draw a random motion primitive starting from hover at `start`.
    pub fn sample<R: Rng>(&self, start: Vector3<f64>, rng: &mut R) -> Trajectory {
        let u = |rng: &mut R, b: f64| if b > 0.0 { rng.gen_range(-b..=b) } else { 0.0 };
        let end = RefSample {
            pos: start + Vector3::new(
                u(rng, self.pos_bound),
                u(rng, self.pos_bound),
                u(rng, self.pos_bound),
            ),
            vel: Vector3::new(u(rng, self.vel_bound), u(rng, self.vel_bound), u(rng, self.vel_bound)),
            acc: Vector3::new(u(rng, self.acc_bound), u(rng, self.acc_bound), u(rng, self.acc_bound)),
        };
        let duration = self.duration.sample(rng);
        Trajectory::generate(RefSample::hover(start), end, duration)
            .expect("bounded end states are always valid")
    }
}

/// Horizontal circle at constant height with a min-jerk lead-in from hover.
///
/// The circle passes through the start point; the lead-in (half a period)
/// accelerates the vehicle to the circle's entry speed and centripetal
/// acceleration, so the reference is continuous in position, velocity and
/// acceleration.
#[derive(Clone, Debug)]
pub struct CircleReference {
    center: Vector3<f64>,
    radius: f64,
    omega: f64,
    lead_in: Trajectory,
    lead_time: f64,
}

impl CircleReference {
    pub fn new(start: Vector3<f64>, radius: f64, period: f64) -> Result<Self, SimError> {
        if !(period.is_finite() && period > 0.0 && radius.is_finite() && radius > 0.0) {
            return Err(SimError::InvalidDuration(period));
        }
        let omega = std::f64::consts::TAU / period;
        let center = start + Vector3::new(0.0, radius, 0.0);
        let lead_time = 0.5 * period;
        let entry = RefSample {
            pos: start,
            vel: Vector3::new(radius * omega, 0.0, 0.0),
            acc: Vector3::new(0.0, radius * omega * omega, 0.0),
        };
        let lead_in = Trajectory::generate(RefSample::hover(start), entry, lead_time)?;
        Ok(Self { center, radius, omega, lead_in, lead_time })
    }

    pub fn sample(&self, t: f64) -> RefSample {
        if t < self.lead_time {
            return self.lead_in.sample(t);
        }
        let th = self.omega * (t - self.lead_time);
        let (s, c) = th.sin_cos();
        let radial = Vector3::new(s, -c, 0.0);
        let tangent = Vector3::new(c, s, 0.0);
        RefSample {
            pos: self.center + self.radius * radial,
            vel: self.radius * self.omega * tangent,
            acc: -self.radius * self.omega * self.omega * radial,
        }
    }
}

/// Any reference the benchmark can track.
#[derive(Clone, Debug)]
pub enum Reference {
    Trajectory(Trajectory),
    Circle(CircleReference),
    Hover(Vector3<f64>),
}

impl Reference {
    pub fn sample(&self, t: f64) -> RefSample {
        match self {
            Reference::Trajectory(tr) => tr.sample(t),
            Reference::Circle(c) => c.sample(t),
            Reference::Hover(p) => RefSample::hover(*p),
        }
    }
}
