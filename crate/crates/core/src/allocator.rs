//! Time-slot allocation for client-server pairs on a TDMA ring.
//!
//! A frame of `N` slots is treated as a ring. Pair `j` needs its server slot
//! at least `beta_j` slots clockwise after its client slot, and no slot may be
//! used twice. When all pairs share one `beta`, the ring decomposes into
//! subrings generated by repeated addition of `beta`; an optimal packing
//! (every distance exactly `beta`, `N/2` pairs) exists iff the subring period
//! is even.
//!
//! [`solve_general_allocation`] handles heterogeneous requirements. This goes
//! beyond the equal-`beta` construction: small instances are solved exactly,
//! larger ones fall back to a greedy heuristic and are flagged as such.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::time::Nanos;

/// Candidate-assignment count under which the general solver searches exactly.
pub const EXACT_WORK_BOUND: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AllocError {
    #[error("ring must have an even number of slots >= 2, got {0}")]
    OddRing(usize),
    #[error("slot duration must be positive, got {0}")]
    BadSlotDuration(Nanos),
    #[error("server delay must be non-negative, got {0}")]
    NegativeDelay(Nanos),
    #[error("beta must satisfy 1 <= beta < {n}, got {beta}")]
    BetaOutOfRange { beta: usize, n: usize },
    #[error("slot index {slot} outside ring of {n} slots")]
    SlotOutOfRange { slot: usize, n: usize },
    #[error("no optimal packing: subring period k = {period} is odd")]
    OddPeriod { period: usize },
    #[error("{pairs} pairs need {} slots but the ring has {n}", 2 * .pairs)]
    TooManyPairs { pairs: usize, n: usize },
    #[error("no injective assignment satisfies the separation constraints")]
    Infeasible,
    #[error("heuristic could not place pair {pair_id}; the instance may still be feasible")]
    HeuristicStuck { pair_id: usize },
    #[error("slot {0} is used more than once")]
    SlotReused(usize),
    #[error("pair {pair_id} has clockwise distance {distance} < beta {beta}")]
    SeparationViolated {
        pair_id: usize,
        distance: usize,
        beta: usize,
    },
    #[error("allocation has {got} pairs but {expected} requirements")]
    PairCountMismatch { expected: usize, got: usize },
    #[error("allocation export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingConfig {
    n_slots: usize,
    slot_duration: Nanos,
}

impl RingConfig {
    pub fn new(n_slots: usize, slot_duration: Nanos) -> Result<Self, AllocError> {
        if n_slots < 2 || !n_slots.is_multiple_of(2) {
            return Err(AllocError::OddRing(n_slots));
        }
        if slot_duration <= Nanos::ZERO {
            return Err(AllocError::BadSlotDuration(slot_duration));
        }
        Ok(Self {
            n_slots,
            slot_duration,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn slot_duration(&self) -> Nanos {
        self.slot_duration
    }

    /// `F = N * dt`.
    pub fn frame_duration(&self) -> Nanos {
        self.slot_duration * self.n_slots as i64
    }

    /// Clockwise distance from slot `from` to slot `to`.
    pub fn clockwise(&self, from: usize, to: usize) -> usize {
        (to + self.n_slots - from % self.n_slots) % self.n_slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRequirement {
    pub pair_id: usize,
    /// `ceil(D_s) + 1` in slot units.
    pub beta_raw: usize,
    /// `beta_raw mod N`.
    pub beta: usize,
    /// Whole frames skipped between request and response, `beta_raw / N`.
    pub rounds_offset: usize,
}

impl PairRequirement {
    pub fn from_beta_raw(pair_id: usize, beta_raw: usize, ring: &RingConfig) -> Self {
        let n = ring.n_slots();
        Self {
            pair_id,
            beta_raw,
            beta: beta_raw % n,
            rounds_offset: beta_raw / n,
        }
    }

    /// Minimum clockwise distance actually enforced. A `beta` of zero only
    /// rules out sharing the client slot.
    pub fn min_distance(&self) -> usize {
        self.beta.max(1)
    }
}

pub fn beta_from_delay(
    pair_id: usize,
    server_delay: Nanos,
    ring: &RingConfig,
) -> Result<PairRequirement, AllocError> {
    if server_delay.is_negative() {
        return Err(AllocError::NegativeDelay(server_delay));
    }
    let dt = ring.slot_duration().as_ns();
    let slots = (server_delay.as_ns() + dt - 1) / dt;
    Ok(PairRequirement::from_beta_raw(
        pair_id,
        slots as usize + 1,
        ring,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotPair {
    pub client_slot: usize,
    pub server_slot: usize,
}

impl SlotPair {
    pub fn new(client_slot: usize, server_slot: usize) -> Self {
        Self {
            client_slot,
            server_slot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotAllocation {
    pub pairs: Vec<SlotPair>,
}

impl SlotAllocation {
    pub fn new(pairs: Vec<SlotPair>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn distances(&self, ring: &RingConfig) -> Vec<usize> {
        self.pairs
            .iter()
            .map(|p| ring.clockwise(p.client_slot, p.server_slot))
            .collect()
    }

    pub fn total_distance(&self, ring: &RingConfig) -> usize {
        self.distances(ring).iter().sum()
    }

    /// Slot ranges and injectivity only.
    pub fn check_injective(&self, ring: &RingConfig) -> Result<(), AllocError> {
        let n = ring.n_slots();
        let mut used = vec![false; n];
        for p in &self.pairs {
            for s in [p.client_slot, p.server_slot] {
                if s >= n {
                    return Err(AllocError::SlotOutOfRange { slot: s, n });
                }
                if used[s] {
                    return Err(AllocError::SlotReused(s));
                }
                used[s] = true;
            }
        }
        Ok(())
    }

    /// Injectivity plus `distance_j >= beta_j` for every pair, matched by position.
    pub fn validate(&self, ring: &RingConfig, reqs: &[PairRequirement]) -> Result<(), AllocError> {
        if reqs.len() != self.pairs.len() {
            return Err(AllocError::PairCountMismatch {
                expected: reqs.len(),
                got: self.pairs.len(),
            });
        }
        self.check_injective(ring)?;
        for (p, r) in self.pairs.iter().zip(reqs) {
            let distance = ring.clockwise(p.client_slot, p.server_slot);
            if distance < r.min_distance() {
                return Err(AllocError::SeparationViolated {
                    pair_id: r.pair_id,
                    distance,
                    beta: r.beta,
                });
            }
        }
        Ok(())
    }

    /// CSV with columns `pair_id, client_slot, server_slot, beta, distance`.
    pub fn write_csv<W: Write>(
        &self,
        ring: &RingConfig,
        reqs: &[PairRequirement],
        out: W,
    ) -> Result<(), AllocError> {
        #[derive(Serialize)]
        struct Row {
            pair_id: usize,
            client_slot: usize,
            server_slot: usize,
            beta: usize,
            distance: usize,
        }
        let mut w = csv::Writer::from_writer(out);
        for (i, p) in self.pairs.iter().enumerate() {
            let (pair_id, beta) = reqs.get(i).map_or((i, 0), |r| (r.pair_id, r.beta));
            w.serialize(Row {
                pair_id,
                client_slot: p.client_slot,
                server_slot: p.server_slot,
                beta,
                distance: ring.clockwise(p.client_slot, p.server_slot),
            })
            .map_err(|e| AllocError::Export(e.to_string()))?;
        }
        w.flush().map_err(|e| AllocError::Export(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subring {
    pub inducing_index: usize,
    pub members: Vec<usize>,
    pub period: usize,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn check_beta(beta: usize, ring: &RingConfig) -> Result<(), AllocError> {
    let n = ring.n_slots();
    if beta == 0 || beta >= n {
        Err(AllocError::BetaOutOfRange { beta, n })
    } else {
        Ok(())
    }
}

/// Smallest `k > 0` with `k * beta = 0 (mod N)`.
pub fn subring_period(beta: usize, ring: &RingConfig) -> Result<usize, AllocError> {
    check_beta(beta, ring)?;
    Ok(ring.n_slots() / gcd(beta, ring.n_slots()))
}

pub fn induce_subring(l: usize, beta: usize, ring: &RingConfig) -> Result<Subring, AllocError> {
    let n = ring.n_slots();
    if l >= n {
        return Err(AllocError::SlotOutOfRange { slot: l, n });
    }
    let period = subring_period(beta, ring)?;
    let members = (0..period).map(|m| (l + m * beta) % n).collect();
    Ok(Subring {
        inducing_index: l,
        members,
        period,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackingVerdict {
    pub feasible: bool,
    pub period: usize,
}

pub fn packing_feasible(beta: usize, ring: &RingConfig) -> Result<PackingVerdict, AllocError> {
    let period = subring_period(beta, ring)?;
    Ok(PackingVerdict {
        feasible: period % 2 == 0,
        period,
    })
}

/// True iff every `beta` in `1..N` admits an optimal packing.
pub fn all_betas_feasible(ring: &RingConfig) -> bool {
    (1..ring.n_slots()).all(|b| packing_feasible(b, ring).is_ok_and(|v| v.feasible))
}

/// Which member of each subring takes the client role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PackingOrder {
    #[default]
    ClientFirst,
    ServerFirst,
}

/// `N/2` pairs at distance exactly `beta`, built from the subrings induced by
/// indexes `0..h`.
pub fn construct_optimal_packing(
    beta: usize,
    ring: &RingConfig,
    order: PackingOrder,
) -> Result<SlotAllocation, AllocError> {
    let verdict = packing_feasible(beta, ring)?;
    if !verdict.feasible {
        return Err(AllocError::OddPeriod {
            period: verdict.period,
        });
    }
    let h = ring.n_slots() / verdict.period;
    let shift = match order {
        PackingOrder::ClientFirst => 0,
        PackingOrder::ServerFirst => 1,
    };
    let mut pairs = Vec::with_capacity(ring.n_slots() / 2);
    for l in 0..h {
        let sub = induce_subring(l, beta, ring)?;
        let k = sub.period;
        for m in (0..k).step_by(2) {
            pairs.push(SlotPair::new(
                sub.members[(m + shift) % k],
                sub.members[(m + shift + 1) % k],
            ));
        }
    }
    Ok(SlotAllocation::new(pairs))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralSolution {
    pub allocation: SlotAllocation,
    pub total_distance: usize,
    /// False when the greedy fallback produced the result.
    pub exact: bool,
}

/// Injective slot assignments left once the first client is pinned to slot 0
/// (rotations are equivalent): `(N-1)! / (N - 2p)!`.
pub fn search_space(n: usize, pairs: usize) -> f64 {
    (1..2 * pairs).map(|i| (n - i) as f64).product()
}

/// Minimises total clockwise distance subject to `distance_j >= beta_j`.
///
/// Exact when [`search_space`] is below `work_bound`; ties go to the
/// lexicographically smallest allocation. Otherwise pairs are placed greedily
/// in descending `beta` at the shortest feasible distance.
pub fn solve_general_allocation(
    reqs: &[PairRequirement],
    ring: &RingConfig,
    work_bound: f64,
) -> Result<GeneralSolution, AllocError> {
    let n = ring.n_slots();
    if 2 * reqs.len() > n {
        return Err(AllocError::TooManyPairs {
            pairs: reqs.len(),
            n,
        });
    }
    if let Some(r) = reqs.iter().find(|r| r.beta >= n) {
        return Err(AllocError::BetaOutOfRange { beta: r.beta, n });
    }
    if reqs.is_empty() {
        return Ok(GeneralSolution {
            allocation: SlotAllocation::default(),
            total_distance: 0,
            exact: true,
        });
    }
    if search_space(n, reqs.len()) < work_bound {
        exact_search(reqs, ring)
    } else {
        greedy(reqs, ring)
    }
}

struct Search {
    n: usize,
    dist: Vec<usize>,
    /// `suffix[j]` = sum of minimum distances of pairs `j..`.
    suffix: Vec<usize>,
    used: Vec<bool>,
    current: Vec<SlotPair>,
    total: usize,
    best: Option<(usize, Vec<SlotPair>)>,
}

impl Search {
    fn bound(&self) -> usize {
        self.best.as_ref().map_or(usize::MAX, |b| b.0)
    }

    fn run(&mut self, j: usize) {
        if j == self.dist.len() {
            if self.total < self.bound() {
                self.best = Some((self.total, self.current.clone()));
            }
            return;
        }
        // Rotating a solution keeps it optimal, so pair 0 starts at slot 0.
        let clients = if j == 0 { 0..1 } else { 0..self.n };
        for c in clients {
            if self.used[c] {
                continue;
            }
            self.used[c] = true;
            for s in 0..self.n {
                if self.used[s] {
                    continue;
                }
                let d = (s + self.n - c) % self.n;
                if d < self.dist[j] || self.total + d + self.suffix[j + 1] >= self.bound() {
                    continue;
                }
                self.used[s] = true;
                self.total += d;
                self.current.push(SlotPair::new(c, s));
                self.run(j + 1);
                self.current.pop();
                self.total -= d;
                self.used[s] = false;
            }
            self.used[c] = false;
        }
    }
}

fn exact_search(
    reqs: &[PairRequirement],
    ring: &RingConfig,
) -> Result<GeneralSolution, AllocError> {
    let dist: Vec<usize> = reqs.iter().map(PairRequirement::min_distance).collect();
    let mut suffix = vec![0; dist.len() + 1];
    for j in (0..dist.len()).rev() {
        suffix[j] = suffix[j + 1] + dist[j];
    }
    let mut search = Search {
        n: ring.n_slots(),
        dist,
        suffix,
        used: vec![false; ring.n_slots()],
        current: Vec::with_capacity(reqs.len()),
        total: 0,
        best: None,
    };
    search.run(0);
    let (total_distance, pairs) = search.best.ok_or(AllocError::Infeasible)?;
    Ok(GeneralSolution {
        allocation: SlotAllocation::new(pairs),
        total_distance,
        exact: true,
    })
}

fn greedy(reqs: &[PairRequirement], ring: &RingConfig) -> Result<GeneralSolution, AllocError> {
    let n = ring.n_slots();
    let mut order: Vec<usize> = (0..reqs.len()).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(reqs[j].beta));
    let mut used = vec![false; n];
    let mut placed: Vec<Option<SlotPair>> = vec![None; reqs.len()];
    for j in order {
        let found = (reqs[j].min_distance()..n).find_map(|d| {
            (0..n)
                .find(|&c| !used[c] && !used[(c + d) % n])
                .map(|c| SlotPair::new(c, (c + d) % n))
        });
        let p = found.ok_or(AllocError::HeuristicStuck {
            pair_id: reqs[j].pair_id,
        })?;
        used[p.client_slot] = true;
        used[p.server_slot] = true;
        placed[j] = Some(p);
    }
    let allocation = SlotAllocation::new(placed.into_iter().flatten().collect());
    Ok(GeneralSolution {
        total_distance: allocation.total_distance(ring),
        allocation,
        exact: false,
    })
}

/// `interactions` disjoint pairs for one logical client-server pair, client
/// slots spread evenly around the ring.
pub fn multi_slot_assignment(
    pair: &PairRequirement,
    ring: &RingConfig,
    interactions: usize,
) -> Result<Vec<SlotPair>, AllocError> {
    let n = ring.n_slots();
    if interactions == 0 || 2 * interactions > n {
        return Err(AllocError::TooManyPairs {
            pairs: interactions,
            n,
        });
    }
    let d = pair.min_distance();
    let mut used = vec![false; n];
    let mut out = Vec::with_capacity(interactions);
    for k in 0..interactions {
        let ideal = ((k * n) as f64 / interactions as f64).round() as usize % n;
        let c = (0..n)
            .map(|off| (ideal + off) % n)
            .find(|&c| !used[c] && !used[(c + d) % n])
            .ok_or(AllocError::Infeasible)?;
        used[c] = true;
        used[(c + d) % n] = true;
        out.push(SlotPair::new(c, (c + d) % n));
    }
    Ok(out)
}
