use std::collections::BTreeMap;

use super::Road;

const BUCKET_SECONDS: f64 = 1.0;

/// Buckets track indices by the time slices their sample span overlaps, so a
/// query at time `t` only touches tracks that can possibly be interpolated
/// there. The index never decides membership on its own; callers still
/// interpolate and filter every candidate.
#[derive(Debug, Clone, Default)]
pub(super) struct TimeIndex {
    roads: BTreeMap<Road, RoadBuckets>,
}

#[derive(Debug, Clone)]
struct RoadBuckets {
    origin: f64,
    buckets: Vec<Vec<usize>>,
}

impl RoadBuckets {
    fn slot(&self, t: f64) -> Option<usize> {
        let k = ((t - self.origin) / BUCKET_SECONDS).floor();
        if k < 0.0 || !k.is_finite() {
            return None;
        }
        Some(k as usize)
    }
}

impl TimeIndex {
    /// `spans` yields `(track index, road, first t, last t)`.
    pub(super) fn build(spans: impl Iterator<Item = (usize, Road, f64, f64)>) -> Self {
        let spans: Vec<_> = spans.collect();
        let mut roads = BTreeMap::new();
        for road in Road::ALL {
            let mine: Vec<_> = spans.iter().filter(|s| s.1 == road).collect();
            if mine.is_empty() {
                continue;
            }
            let origin = mine.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
            let mut rb = RoadBuckets {
                origin,
                buckets: Vec::new(),
            };
            for &&(idx, _, first, last) in &mine {
                let lo = rb.slot(first).unwrap_or(0);
                let hi = rb.slot(last).unwrap_or(0);
                if rb.buckets.len() <= hi {
                    rb.buckets.resize(hi + 1, Vec::new());
                }
                for b in &mut rb.buckets[lo..=hi] {
                    b.push(idx);
                }
            }
            roads.insert(road, rb);
        }
        TimeIndex { roads }
    }

    /// Track indices whose span may contain `t`, in ascending order.
    pub(super) fn candidates(&self, road: Road, t: f64) -> &[usize] {
        self.roads
            .get(&road)
            .and_then(|rb| rb.slot(t).and_then(|k| rb.buckets.get(k)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}
