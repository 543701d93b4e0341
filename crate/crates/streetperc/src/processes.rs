//! Point processes living on the street system: Poisson users along streets,
//! Bernoulli relays on crossroads, and the openness rule for street segments
//! under a finite connectivity range.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, StreamRng};
use crate::pvt::Tessellation;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("user intensity must be nonnegative, got {0}")]
    NegativeIntensity(f64),
    #[error("relay probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("arcs must be sorted ascending and lie in [0, {len}]")]
    InvalidArcs { len: f64 },
    #[error("connectivity range must be positive, got {0}")]
    InvalidRange(f64),
    #[error("trial count must be at least 1")]
    NoTrials,
}

/// A user on a street, located by arc-length distance from the street's
/// first endpoint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct User {
    pub edge_id: usize,
    pub arc: f64,
    pub position: Point,
}

/// Bernoulli marks on the crossroads. One latent uniform is stored per
/// vertex so that a single realization serves every probability level:
/// the open set at p1 is contained in the open set at p2 whenever p1 <= p2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelayAssignment {
    latents: Vec<f64>,
    p: f64,
}

impl RelayAssignment {
    /// Assemble an assignment from explicit latent uniforms (fixtures).
    /// A vertex is open when its latent is strictly below the probability.
    pub fn from_latents(latents: Vec<f64>, p: f64) -> Result<RelayAssignment, ProcessError> {
        check_probability(p)?;
        Ok(RelayAssignment { latents, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn vertex_count(&self) -> usize {
        self.latents.len()
    }

    /// Whether vertex `v` carries a relay at this assignment's probability.
    pub fn is_open(&self, v: usize) -> bool {
        self.latents[v] < self.p
    }

    /// Whether vertex `v` would carry a relay at probability `p`.
    pub fn is_open_at(&self, v: usize, p: f64) -> bool {
        self.latents[v] < p
    }

    /// The same latent realization viewed at a different probability.
    pub fn with_p(&self, p: f64) -> Result<RelayAssignment, ProcessError> {
        check_probability(p)?;
        Ok(RelayAssignment {
            latents: self.latents.clone(),
            p,
        })
    }

    pub fn open_count(&self) -> usize {
        (0..self.latents.len()).filter(|&v| self.is_open(v)).count()
    }
}

/// Users plus relays on a given tessellation: the node material of the
/// connectivity graph.
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub users: Vec<User>,
    pub relays: RelayAssignment,
    /// Fingerprint of the tessellation the samples were drawn on.
    pub tessellation_ref: u64,
}

impl NodeSet {
    pub fn new(t: &Tessellation, users: Vec<User>, relays: RelayAssignment) -> NodeSet {
        NodeSet {
            users,
            relays,
            tessellation_ref: t.fingerprint(),
        }
    }
}

/// Sample the user process: per street, a Poisson(`lambda` x length) count
/// with independently uniform arc positions.
pub fn sample_users(
    t: &Tessellation,
    lambda: f64,
    rng: &mut StreamRng,
) -> Result<Vec<User>, ProcessError> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(ProcessError::NegativeIntensity(lambda));
    }
    let mut users = Vec::new();
    if lambda == 0.0 {
        return Ok(users);
    }
    for (edge_id, e) in t.edges().iter().enumerate() {
        let mean = lambda * e.length;
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).expect("positive finite mean").sample(rng) as usize;
        for _ in 0..count {
            let arc = rng.random_range(0.0..e.length);
            users.push(User {
                edge_id,
                arc,
                position: e.geometry.point_at_arc(arc),
            });
        }
    }
    Ok(users)
}

/// Sample users together with an independent thinning mark per user, for
/// coupled sweeps over the intensity: keeping marks `< lambda / lambda_max`
/// yields an exact realization at the lower intensity, monotone in lambda.
pub fn sample_users_marked(
    t: &Tessellation,
    lambda_max: f64,
    rng: &mut StreamRng,
) -> Result<Vec<(User, f64)>, ProcessError> {
    let users = sample_users(t, lambda_max, rng)?;
    Ok(users
        .into_iter()
        .map(|u| {
            let mark = rng.random_range(0.0..1.0);
            (u, mark)
        })
        .collect())
}

/// Sample the relay process: every crossroad open independently with
/// probability `p`.
pub fn sample_relays(
    t: &Tessellation,
    p: f64,
    rng: &mut StreamRng,
) -> Result<RelayAssignment, ProcessError> {
    check_probability(p)?;
    let latents = (0..t.vertices().len())
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    Ok(RelayAssignment { latents, p })
}

fn check_probability(p: f64) -> Result<(), ProcessError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ProcessError::InvalidProbability(p))
    }
}

/// Openness of a street segment of length `seg_length` carrying points at
/// the sorted positions `arcs`, under connectivity range `r`.
///
/// A segment is open when it is no longer than `r`, or when every closed
/// sub-segment of length `r` contains at least one point; equivalently the
/// leading gap, every interior gap, and the trailing gap are all at most `r`.
pub fn is_segment_open(seg_length: f64, arcs: &[f64], r: f64) -> Result<bool, ProcessError> {
    if r.is_nan() || r <= 0.0 {
        return Err(ProcessError::InvalidRange(r));
    }
    let valid = arcs.windows(2).all(|w| w[0] <= w[1])
        && arcs.iter().all(|&a| (0.0..=seg_length).contains(&a));
    if !valid {
        return Err(ProcessError::InvalidArcs { len: seg_length });
    }
    if seg_length <= r {
        return Ok(true);
    }
    let Some(&first) = arcs.first() else {
        return Ok(false);
    };
    if first > r {
        return Ok(false);
    }
    if arcs.windows(2).any(|w| w[1] - w[0] > r) {
        return Ok(false);
    }
    Ok(seg_length - arcs.last().unwrap() <= r)
}

/// Monte-Carlo estimate of the probability that a street of length `L`
/// carrying Poisson(`lambda`) users per unit length is open at range `r`.
///
/// The two analytic branches short-circuit exactly; otherwise gaps are
/// simulated. No closed-form spacing formula is assumed.
pub fn street_open_probability(
    len: f64,
    lambda: f64,
    r: f64,
    trials: u64,
    rng: &mut StreamRng,
) -> Result<f64, ProcessError> {
    if len.is_nan() || len <= 0.0 || r.is_nan() || r <= 0.0 {
        return Err(ProcessError::InvalidRange(if r > 0.0 { len } else { r }));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(ProcessError::NegativeIntensity(lambda));
    }
    if trials == 0 {
        return Err(ProcessError::NoTrials);
    }
    if len <= r {
        return Ok(1.0);
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }

    let poi = Poisson::new(lambda * len).expect("positive finite mean");
    let mut arcs: Vec<f64> = Vec::new();
    let mut open = 0u64;
    for _ in 0..trials {
        let n = poi.sample(rng) as usize;
        arcs.clear();
        arcs.extend((0..n).map(|_| rng.random_range(0.0..len)));
        arcs.sort_unstable_by(f64::total_cmp);
        if is_segment_open(len, &arcs, r).expect("validated inputs") {
            open += 1;
        }
    }
    Ok(open as f64 / trials as f64)
}
