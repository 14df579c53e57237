//! User association, overload relaying, and hotspot fairness.

use std::cmp::Ordering;

use crate::mobility::horizontal_distance;
use crate::scalar::Real;

/// Which aerial base station serves an IoTD in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Server {
    Haps,
    Uav(usize),
}

impl Server {
    /// Column index in the `N x (M + 1)` association matrix (HAPS is column 0).
    pub fn column(self) -> usize {
        match self {
            Server::Haps => 0,
            Server::Uav(m) => m + 1,
        }
    }

    pub fn uav(self) -> Option<usize> {
        match self {
            Server::Uav(m) => Some(m),
            Server::Haps => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMap {
    pub serving: Vec<Server>,
    /// `relay[n]` is set when the serving UAV forwards IoTD `n`'s work to the HAPS.
    pub relay: Vec<bool>,
    pub n_uavs: usize,
}

impl AssociationMap {
    pub fn all_haps(n: usize, n_uavs: usize) -> Self {
        Self {
            serving: vec![Server::Haps; n],
            relay: vec![false; n],
            n_uavs,
        }
    }

    /// Binary `N x (M + 1)` matrix with the HAPS in column 0.
    pub fn beta_matrix(&self) -> Vec<Vec<u8>> {
        self.serving
            .iter()
            .map(|s| {
                let mut row = vec![0; self.n_uavs + 1];
                row[s.column()] = 1;
                row
            })
            .collect()
    }

    pub fn served_by(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.serving
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == Server::Uav(m))
            .map(|(n, _)| n)
    }

    pub fn load(&self, m: usize) -> usize {
        self.served_by(m).count()
    }
}

fn by_deadline<T: Real>(deadlines: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..deadlines.len()).collect();
    order.sort_by(|&a, &b| {
        deadlines[a]
            .partial_cmp(&deadlines[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy association: IoTDs in order of tightest deadline take the nearest
/// UAV within `radius` (horizontal) that still has capacity; the rest go to
/// the HAPS. Ties resolve to the lower index.
pub fn associate<T: Real>(
    iotds: &[[T; 2]],
    deadlines: &[T],
    uavs: &[[T; 2]],
    radius: T,
    capacity: usize,
) -> AssociationMap {
    let mut load = vec![0usize; uavs.len()];
    let mut map = AssociationMap::all_haps(iotds.len(), uavs.len());
    for n in by_deadline(deadlines) {
        let mut best: Option<(usize, T)> = None;
        for (m, &u) in uavs.iter().enumerate() {
            if load[m] >= capacity {
                continue;
            }
            let d = horizontal_distance(iotds[n], u);
            if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((m, d));
            }
        }
        if let Some((m, _)) = best {
            load[m] += 1;
            map.serving[n] = Server::Uav(m);
        }
    }
    map
}

/// Flags UAV-served IoTDs for relaying until each UAV's requested compute
/// fits its cap. Loosest deadlines are relayed first; among equal deadlines
/// the higher index goes first.
pub fn decide_relay<T: Real>(
    assoc: &mut AssociationMap,
    requested: &[T],
    deadlines: &[T],
    uav_caps: &[T],
) {
    assoc.relay.iter_mut().for_each(|r| *r = false);
    for (m, &cap) in uav_caps.iter().enumerate() {
        let mut members: Vec<usize> = assoc.served_by(m).collect();
        let mut total: T = members.iter().map(|&n| requested[n]).sum();
        if total <= cap {
            continue;
        }
        members.sort_by(|&a, &b| {
            deadlines[b]
                .partial_cmp(&deadlines[a])
                .unwrap_or(Ordering::Equal)
                .then(b.cmp(&a))
        });
        for n in members {
            if total <= cap {
                break;
            }
            assoc.relay[n] = true;
            total -= requested[n];
        }
    }
}

/// Cumulative per-hotspot service counts, `counts[h][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HotspotCounts {
    pub counts: Vec<Vec<f64>>,
}

impl HotspotCounts {
    pub fn new(n_hotspots: usize, n_uavs: usize) -> Self {
        Self {
            counts: vec![vec![0.0; n_uavs]; n_hotspots],
        }
    }

    /// Credits each UAV-served IoTD to its nearest hotspot, skipping IoTDs
    /// farther than `reach` from every hotspot centre.
    pub fn record(&mut self, assoc: &AssociationMap, iotds: &[[f64; 2]], centres: &[[f64; 2]], reach: f64) {
        for (n, s) in assoc.serving.iter().enumerate() {
            let Some(m) = s.uav() else { continue };
            let nearest = centres
                .iter()
                .enumerate()
                .map(|(h, &c)| (h, horizontal_distance(iotds[n], c)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
            if let Some((h, d)) = nearest {
                if d <= reach {
                    self.counts[h][m] += 1.0;
                }
            }
        }
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.counts.iter().map(|row| row[m]).collect()
    }

    /// Mean over UAVs of the per-UAV fairness index.
    pub fn fairness(&self) -> f64 {
        let n_uavs = self.counts.first().map_or(0, Vec::len);
        if n_uavs == 0 {
            return 1.0;
        }
        (0..n_uavs).map(|m| hotspot_fairness(&self.column(m))).sum::<f64>() / n_uavs as f64
    }
}

/// Jain index `(sum c)^2 / (H * sum c^2)` of per-hotspot cumulative counts;
/// 1 when every count is zero.
pub fn hotspot_fairness<T: Real>(counts: &[T]) -> T {
    let h = T::from_usize(counts.len()).unwrap_or_else(T::one);
    let sum: T = counts.iter().copied().sum();
    let sq: T = counts.iter().map(|&c| c * c).sum();
    if sq <= T::zero() {
        T::one()
    } else {
        sum * sum / (h * sq)
    }
}
