//! Slice management: per-operator logical networks carved from the fog's
//! abstract resources, with idle capacity diverted to loaded slices.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{OperatorId, SliceId};
use crate::topology::LinkClass;

/// Sliceable resource classes. Internal links are not sliced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceClass {
    Macro,
    Wlan,
    MiddleMile,
    Backhaul,
}

impl ResourceClass {
    pub const ALL: [ResourceClass; 4] = [
        ResourceClass::Macro,
        ResourceClass::Wlan,
        ResourceClass::MiddleMile,
        ResourceClass::Backhaul,
    ];

    pub fn of_link(class: LinkClass) -> Option<ResourceClass> {
        match class {
            LinkClass::MacroAccess => Some(ResourceClass::Macro),
            LinkClass::WlanAccess => Some(ResourceClass::Wlan),
            LinkClass::MiddleMile => Some(ResourceClass::MiddleMile),
            LinkClass::Backhaul => Some(ResourceClass::Backhaul),
            LinkClass::Internal => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceClass::Macro => "macro",
            ResourceClass::Wlan => "wlan",
            ResourceClass::MiddleMile => "middle_mile",
            ResourceClass::Backhaul => "backhaul",
        }
    }
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fraction of each resource class owned by a slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shares {
    #[serde(rename = "macro")]
    pub macro_: f64,
    pub wlan: f64,
    pub middle_mile: f64,
    pub backhaul: f64,
}

impl Shares {
    pub fn uniform(share: f64) -> Shares {
        Shares {
            macro_: share,
            wlan: share,
            middle_mile: share,
            backhaul: share,
        }
    }

    pub fn get(&self, class: ResourceClass) -> f64 {
        match class {
            ResourceClass::Macro => self.macro_,
            ResourceClass::Wlan => self.wlan,
            ResourceClass::MiddleMile => self.middle_mile,
            ResourceClass::Backhaul => self.backhaul,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub id: SliceId,
    pub operator: OperatorId,
    pub shares: Shares,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SliceError {
    #[error("shares for {class} would sum to {total} > 1")]
    ShareOvercommit { class: ResourceClass, total: f64 },
    #[error("operator {0} already has a slice")]
    DuplicateOperator(OperatorId),
    #[error("slice id {0} already registered")]
    DuplicateSlice(SliceId),
    #[error("share for {class} must lie in [0, 1]")]
    InvalidShare { class: ResourceClass },
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
}

/// One resource class of one slice after an allocation round.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassRuntime {
    pub entitled: f64,
    pub demand: f64,
    /// Entitled + borrowed - lent, bounded by demand.
    pub granted: f64,
    /// Idle entitlement that no other slice borrowed; still usable by the owner.
    pub unlent: f64,
}

impl ClassRuntime {
    /// Capacity the slice's control functions may plan against.
    pub fn available(&self) -> f64 {
        self.granted + self.unlent
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceRuntime {
    pub slice: SliceId,
    pub classes: [ClassRuntime; 4],
}

impl SliceRuntime {
    pub fn class(&self, class: ResourceClass) -> &ClassRuntime {
        &self.classes[class.index()]
    }
}

/// Result of dividing one resource among slices.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Division {
    pub granted: f64,
    pub unlent: f64,
}

/// Divides `physical` capacity among claimants.
///
/// Each claimant first receives `min(demand, entitled)`. Whatever remains is
/// handed to still-unsatisfied claimants by progressive filling weighted by
/// entitlement (equal weights if all their entitlements are zero), never
/// beyond their demand. Borrowed capacity is drawn first from capacity that
/// no claimant is entitled to, then from idle entitlements in proportion to
/// their size. The canonical sum of grants never exceeds `physical`.
pub fn divide(physical: f64, entitled: &[f64], demand: &[f64]) -> Vec<Division> {
    let n = entitled.len();
    assert_eq!(n, demand.len());
    let physical = physical.max(0.0);
    let protected: Vec<f64> = (0..n)
        .map(|i| demand[i].max(0.0).min(entitled[i].max(0.0)))
        .collect();
    let mut granted = protected.clone();
    let mut pool = (physical - granted.iter().sum::<f64>()).max(0.0);
    let mut open: Vec<bool> = (0..n).map(|i| demand[i] > granted[i]).collect();

    while pool > 0.0 && open.iter().any(|&o| o) {
        let mut weights: Vec<f64> = (0..n)
            .map(|i| if open[i] { entitled[i].max(0.0) } else { 0.0 })
            .collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            weights = open.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        }
        let total_w: f64 = weights.iter().sum();
        // Pool per unit weight, versus the tightest remaining need per unit weight.
        let level = pool / total_w;
        let (tight, tight_level) = (0..n)
            .filter(|&i| open[i])
            .map(|i| (i, (demand[i] - granted[i]) / weights[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        if level < tight_level {
            for i in 0..n {
                if open[i] {
                    granted[i] += level * weights[i];
                }
            }
            pool = 0.0;
        } else {
            let mut used = 0.0;
            for i in 0..n {
                if open[i] {
                    let add = tight_level * weights[i];
                    granted[i] += add;
                    used += add;
                    if demand[i] - granted[i] <= 0.0 {
                        granted[i] = demand[i];
                        open[i] = false;
                    }
                }
            }
            open[tight] = false;
            granted[tight] = demand[tight];
            pool = (pool - used).max(0.0);
        }
    }

    // Exactness: trim borrowed amounts if rounding pushed the total over.
    loop {
        let total: f64 = granted.iter().sum();
        if total <= physical {
            break;
        }
        let excess = total - physical;
        // Borrowed amounts go first; rounded entitlements only if nothing was borrowed.
        let borrowed = (0..n)
            .filter(|&i| granted[i] > protected[i])
            .max_by(|&a, &b| (granted[a] - protected[a]).total_cmp(&(granted[b] - protected[b])));
        let (i, floor) = match borrowed {
            Some(i) => (i, protected[i]),
            None => match (0..n)
                .filter(|&i| granted[i] > 0.0)
                .max_by(|&a, &b| granted[a].total_cmp(&granted[b]))
            {
                Some(i) => (i, 0.0),
                None => break,
            },
        };
        let next = (granted[i] - excess).max(floor);
        granted[i] = if next < granted[i] {
            next
        } else {
            granted[i].next_down().max(floor)
        };
    }

    let idle: Vec<f64> = (0..n)
        .map(|i| (entitled[i].max(0.0) - protected[i]).max(0.0))
        .collect();
    let idle_total: f64 = idle.iter().sum();
    let borrowed: f64 = (0..n).map(|i| granted[i] - protected[i]).sum();
    let unassigned = (physical - entitled.iter().map(|e| e.max(0.0)).sum::<f64>()).max(0.0);
    let from_idle = (borrowed - unassigned).max(0.0).min(idle_total);
    (0..n)
        .map(|i| {
            let lent = if idle_total > 0.0 {
                from_idle * idle[i] / idle_total
            } else {
                0.0
            };
            Division {
                granted: granted[i],
                unlent: (idle[i] - lent).max(0.0),
            }
        })
        .collect()
}

/// The slice management function of one fog.
#[derive(Clone, Debug)]
pub struct SliceManager {
    physical: [f64; 4],
    slices: BTreeMap<SliceId, SliceSpec>,
    runtime: BTreeMap<SliceId, SliceRuntime>,
}

impl SliceManager {
    /// `physical[c]` is the aggregate capacity of resource class `c`.
    pub fn new(physical: [f64; 4]) -> Self {
        SliceManager {
            physical,
            slices: BTreeMap::new(),
            runtime: BTreeMap::new(),
        }
    }

    pub fn physical(&self, class: ResourceClass) -> f64 {
        self.physical[class.index()]
    }

    pub fn set_physical(&mut self, physical: [f64; 4]) {
        self.physical = physical;
    }

    pub fn slices(&self) -> impl Iterator<Item = &SliceSpec> {
        self.slices.values()
    }

    pub fn spec(&self, slice: SliceId) -> Option<&SliceSpec> {
        self.slices.get(&slice)
    }

    pub fn slice_of_operator(&self, operator: &OperatorId) -> Option<SliceId> {
        self.slices
            .values()
            .find(|s| &s.operator == operator)
            .map(|s| s.id)
    }

    pub fn share(&self, slice: SliceId, class: ResourceClass) -> f64 {
        self.slices.get(&slice).map_or(0.0, |s| s.shares.get(class))
    }

    pub fn entitled(&self, slice: SliceId, class: ResourceClass) -> f64 {
        self.slices
            .keys()
            .position(|&s| s == slice)
            .map_or(0.0, |k| self.entitlements(class)[k])
    }

    /// Entitlements of every slice in id order. Rounding can push the sum of
    /// share x physical an ulp past physical; the largest entitlement absorbs it.
    fn entitlements(&self, class: ResourceClass) -> Vec<f64> {
        let physical = self.physical(class).max(0.0);
        let mut out: Vec<f64> = self
            .slices
            .values()
            .map(|s| s.shares.get(class) * physical)
            .collect();
        while out.iter().sum::<f64>() > physical {
            let Some(k) = (0..out.len()).max_by(|&a, &b| out[a].total_cmp(&out[b]).then(b.cmp(&a))) else {
                break;
            };
            out[k] = out[k].next_down().max(0.0);
        }
        out
    }

    pub fn create_slice(&mut self, spec: SliceSpec) -> Result<SliceId, SliceError> {
        if self.slices.contains_key(&spec.id) {
            return Err(SliceError::DuplicateSlice(spec.id));
        }
        if self.slice_of_operator(&spec.operator).is_some() {
            return Err(SliceError::DuplicateOperator(spec.operator));
        }
        for class in ResourceClass::ALL {
            let share = spec.shares.get(class);
            if !(0.0..=1.0).contains(&share) {
                return Err(SliceError::InvalidShare { class });
            }
            let total: f64 = self
                .slices
                .values()
                .map(|s| s.shares.get(class))
                .sum::<f64>()
                + share;
            if total > 1.0 {
                return Err(SliceError::ShareOvercommit { class, total });
            }
        }
        let id = spec.id;
        self.slices.insert(id, spec);
        Ok(id)
    }

    /// Recomputes grants for every class from per-slice demand (indexed by
    /// [`ResourceClass::index`]); missing slices demand nothing.
    pub fn compute_slice_allocations(
        &mut self,
        demands: &BTreeMap<SliceId, [f64; 4]>,
    ) -> Vec<SliceRuntime> {
        let ids: Vec<SliceId> = self.slices.keys().copied().collect();
        let mut out: Vec<SliceRuntime> = ids
            .iter()
            .map(|&slice| SliceRuntime {
                slice,
                classes: [ClassRuntime::default(); 4],
            })
            .collect();
        for class in ResourceClass::ALL {
            let c = class.index();
            let entitled = self.entitlements(class);
            let demand: Vec<f64> = ids
                .iter()
                .map(|s| demands.get(s).map_or(0.0, |d| d[c]))
                .collect();
            let div = divide(self.physical[c], &entitled, &demand);
            for (k, rt) in out.iter_mut().enumerate() {
                rt.classes[c] = ClassRuntime {
                    entitled: entitled[k],
                    demand: demand[k],
                    granted: div[k].granted,
                    unlent: div[k].unlent,
                };
            }
        }
        self.runtime = out.iter().map(|r| (r.slice, r.clone())).collect();
        out
    }

    /// Latest runtime of a slice; before any allocation round a slice holds
    /// its whole entitlement as unlent reserve.
    pub fn runtime(&self, slice: SliceId) -> Result<SliceRuntime, SliceError> {
        if !self.slices.contains_key(&slice) {
            return Err(SliceError::UnknownSlice(slice));
        }
        Ok(self.runtime.get(&slice).cloned().unwrap_or_else(|| {
            let mut classes = [ClassRuntime::default(); 4];
            for class in ResourceClass::ALL {
                let e = self.entitled(slice, class);
                classes[class.index()] = ClassRuntime {
                    entitled: e,
                    demand: 0.0,
                    granted: 0.0,
                    unlent: e,
                };
            }
            SliceRuntime { slice, classes }
        }))
    }
}
