use super::EngineError;

/// Rate comparison tolerance (Mb/s) used where exactness is not required.
pub const RATE_EPS: f64 = 1e-9;

/// Relative slack below which a link or demand counts as exhausted while filling.
const FILL_TOL: f64 = 1e-12;

/// A best-effort flow: the links it crosses (indices into the capacity
/// vector) and the rate it asks for.
#[derive(Clone, Debug, PartialEq)]
pub struct Demand {
    pub links: Vec<usize>,
    pub rate: f64,
}

/// A flow as seen by [`recompute_fair_shares`]: guaranteed flows carry `gbr`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShareRequest {
    pub links: Vec<usize>,
    pub demand: f64,
    pub gbr: Option<f64>,
}

/// Progressive-filling max-min fair allocation.
///
/// All unfrozen flows grow at the same rate until a link saturates or a flow
/// reaches its demand; the flows involved freeze and filling continues with
/// the rest. Flows that cross no link receive their full demand.
pub fn max_min_fair(capacities: &[f64], flows: &[Demand]) -> Vec<f64> {
    let mut alloc = vec![0.0; flows.len()];
    let mut active: Vec<bool> = flows.iter().map(|f| f.rate > 0.0).collect();
    for (i, f) in flows.iter().enumerate() {
        if active[i] && f.links.is_empty() {
            alloc[i] = f.rate;
            active[i] = false;
        }
    }
    let mut residual: Vec<f64> = capacities.iter().map(|c| c.max(0.0)).collect();
    let mut counts = vec![0usize; capacities.len()];

    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut any = false;
        for (i, f) in flows.iter().enumerate() {
            if active[i] {
                any = true;
                for &l in &f.links {
                    counts[l] += 1;
                }
            }
        }
        if !any {
            break;
        }

        // Largest common increment, remembering what limits it.
        let mut inc = f64::INFINITY;
        let mut limit_link = None;
        let mut limit_flow = None;
        for (l, &n) in counts.iter().enumerate() {
            if n > 0 {
                let share = residual[l] / n as f64;
                if share < inc {
                    inc = share;
                    limit_link = Some(l);
                    limit_flow = None;
                }
            }
        }
        for (i, f) in flows.iter().enumerate() {
            if active[i] {
                let headroom = f.rate - alloc[i];
                if headroom < inc {
                    inc = headroom;
                    limit_flow = Some(i);
                    limit_link = None;
                }
            }
        }
        let inc = inc.max(0.0);

        for (i, f) in flows.iter().enumerate() {
            if active[i] {
                alloc[i] += inc;
                if alloc[i] > f.rate {
                    alloc[i] = f.rate;
                }
            }
        }
        for (l, &n) in counts.iter().enumerate() {
            if n > 0 {
                residual[l] = (residual[l] - inc * n as f64).max(0.0);
            }
        }

        let saturated: Vec<bool> = (0..capacities.len())
            .map(|l| {
                counts[l] > 0
                    && (Some(l) == limit_link || residual[l] <= FILL_TOL * capacities[l].abs())
            })
            .collect();
        for (i, f) in flows.iter().enumerate() {
            if !active[i] {
                continue;
            }
            let satisfied = Some(i) == limit_flow || f.rate - alloc[i] <= FILL_TOL * f.rate;
            if satisfied {
                alloc[i] = f.rate;
                active[i] = false;
            } else if f.links.iter().any(|&l| saturated[l]) {
                active[i] = false;
            }
        }
    }
    alloc
}

/// Per-link totals, summing flows in index order.
///
/// This is the reference summation order for every capacity check in the
/// crate, so comparisons against capacity are exact and reproducible.
pub fn canonical_link_totals(n_links: usize, links_of: &[&[usize]], alloc: &[f64]) -> Vec<f64> {
    let mut totals = vec![0.0; n_links];
    for (links, &a) in links_of.iter().zip(alloc) {
        for &l in links.iter() {
            totals[l] += a;
        }
    }
    totals
}

/// Trims adjustable allocations until every canonical link total is within
/// capacity. Returns the index of a link that cannot be fixed because only
/// fixed (guaranteed) flows load it.
pub fn clamp_to_capacity(
    capacities: &[f64],
    links_of: &[&[usize]],
    alloc: &mut [f64],
    adjustable: &[bool],
) -> Result<(), usize> {
    loop {
        let totals = canonical_link_totals(capacities.len(), links_of, alloc);
        let Some(over) = (0..capacities.len()).find(|&l| totals[l] > capacities[l]) else {
            return Ok(());
        };
        let excess = totals[over] - capacities[over];
        let victim = (0..alloc.len())
            .filter(|&i| adjustable[i] && alloc[i] > 0.0 && links_of[i].contains(&over))
            .max_by(|&a, &b| alloc[a].total_cmp(&alloc[b]).then(b.cmp(&a)))
            .ok_or(over)?;
        let trimmed = (alloc[victim] - excess).max(0.0);
        alloc[victim] = if trimmed < alloc[victim] {
            trimmed
        } else {
            alloc[victim].next_down().max(0.0)
        };
    }
}

/// Guaranteed flows receive exactly their reserved rate; best-effort flows
/// share the residual capacity max-min fairly.
///
/// Capacity is conserved exactly under [`canonical_link_totals`].
pub fn recompute_fair_shares(
    capacities: &[f64],
    flows: &[ShareRequest],
) -> Result<Vec<f64>, EngineError> {
    let links_of: Vec<&[usize]> = flows.iter().map(|f| f.links.as_slice()).collect();
    let gbr_alloc: Vec<f64> = flows.iter().map(|f| f.gbr.unwrap_or(0.0)).collect();
    let reserved = canonical_link_totals(capacities.len(), &links_of, &gbr_alloc);
    if let Some(link) = (0..capacities.len()).find(|&l| reserved[l] > capacities[l]) {
        return Err(EngineError::GbrOvercommit { link });
    }
    let residual: Vec<f64> = capacities
        .iter()
        .zip(&reserved)
        .map(|(c, r)| c - r)
        .collect();

    let be_index: Vec<usize> = (0..flows.len())
        .filter(|&i| flows[i].gbr.is_none())
        .collect();
    let be: Vec<Demand> = be_index
        .iter()
        .map(|&i| Demand {
            links: flows[i].links.clone(),
            rate: flows[i].demand,
        })
        .collect();
    let be_alloc = max_min_fair(&residual, &be);

    let mut alloc = gbr_alloc;
    for (k, &i) in be_index.iter().enumerate() {
        alloc[i] = be_alloc[k];
    }
    let adjustable: Vec<bool> = flows.iter().map(|f| f.gbr.is_none()).collect();
    clamp_to_capacity(capacities, &links_of, &mut alloc, &adjustable)
        .map_err(|link| EngineError::GbrOvercommit { link })?;
    Ok(alloc)
}
