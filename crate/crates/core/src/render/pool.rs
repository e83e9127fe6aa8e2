use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::graph::{Covariance, LineageGraph, LinkId, SpotId};

use super::colormap::{track_color, ColorMap, Rgba};
use super::window::VisibilityWindow;

/// Smallest ellipsoid semi-axis drawn for a spot, world units.
pub const MIN_SPOT_RADIUS: f64 = 0.25;
/// Radius of link cylinders, world units.
pub const LINK_RADIUS: f64 = 0.1;
/// Factor applied to the capacity when a pool runs out of instances.
pub const GROWTH_FACTOR: f64 = 1.5;

pub type Transform = [f32; 16];

pub const IDENTITY: Transform = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Spot,
    Link,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub active: bool,
    /// Row-major 4x4.
    pub transform: Transform,
    pub color: Rgba,
}

impl Instance {
    const INACTIVE: Instance = Instance { active: false, transform: IDENTITY, color: [1.0; 4] };
}

/// Pre-generated render instances of one primitive type. Instance indices
/// stay valid for the life of the pool: it only ever grows.
#[derive(Clone, Debug, PartialEq)]
pub struct InstancePool {
    pub kind: InstanceKind,
    instances: Vec<Instance>,
}

impl InstancePool {
    pub fn new(kind: InstanceKind, capacity: usize) -> Self {
        InstancePool { kind, instances: vec![Instance::INACTIVE; capacity] }
    }

    pub fn capacity(&self) -> usize {
        self.instances.len()
    }

    pub fn active_count(&self) -> usize {
        self.instances.iter().filter(|i| i.active).count()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn get(&self, index: usize) -> Option<&Instance> {
        self.instances.get(index)
    }

    /// Ensures room for `required` instances. Returns whether the pool grew.
    pub fn reserve(&mut self, required: usize) -> bool {
        if required <= self.instances.len() {
            return false;
        }
        let grown = (self.instances.len() as f64 * GROWTH_FACTOR).ceil() as usize;
        self.instances.resize(required.max(grown), Instance::INACTIVE);
        true
    }

    fn deactivate_all(&mut self) {
        for i in &mut self.instances {
            i.active = false;
        }
    }
}

/// Spot (sphere) and link (cylinder) pools plus the bookkeeping that maps
/// graph ids to instance slots.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePools {
    pub spots: InstancePool,
    pub links: InstancePool,
    spot_slots: Vec<Option<SpotId>>,
    /// Indexed by link id.
    link_slots: Vec<Option<usize>>,
    link_slot_ids: Vec<Option<LinkId>>,
    pub population_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameStats {
    pub timepoint: i32,
    pub active_spots: usize,
    pub active_links: usize,
    pub spot_capacity: usize,
    pub link_capacity: usize,
    pub spot_pool_grew: bool,
    pub link_pool_grew: bool,
}

/// Ellipsoid transform: rotation and semi-axes from the covariance's
/// eigendecomposition, translated to `position`. Axes shorter than
/// [`MIN_SPOT_RADIUS`] (including those of rank-deficient covariances) are
/// widened to it.
pub fn spot_transform(position: [f64; 3], covariance: &Covariance) -> Transform {
    let eig = covariance.eigen();
    let mut rot: Matrix3<f64> = eig.eigenvectors;
    if rot.determinant() < 0.0 {
        let flipped = -rot.column(2);
        rot.set_column(2, &flipped);
    }
    let radii = eig.eigenvalues.map(|l| l.max(0.0).sqrt().max(MIN_SPOT_RADIUS));
    let m = rot * Matrix3::from_diagonal(&radii);
    affine(&m, position)
}

/// Cylinder transform mapping the unit cylinder (radius 1, `y` in `0..1`)
/// onto the segment `from -> to`.
pub fn link_transform(from: [f64; 3], to: [f64; 3]) -> Transform {
    let axis = Vector3::from(to) - Vector3::from(from);
    let len = axis.norm();
    let dir = if len > 0.0 { axis / len } else { Vector3::y() };
    let helper = if dir.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
    let u = dir.cross(&helper).normalize();
    let w = u.cross(&dir);
    let m = Matrix3::from_columns(&[w * LINK_RADIUS, axis, u * LINK_RADIUS]);
    affine(&m, from)
}

fn affine(m: &Matrix3<f64>, t: [f64; 3]) -> Transform {
    let mut out = [0.0f32; 16];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 4 + c] = m[(r, c)] as f32;
        }
        out[r * 4 + 3] = t[r] as f32;
    }
    out[15] = 1.0;
    out
}

/// Builds both pools once: spot capacity is the largest per-timepoint spot
/// count, link capacity the number of alive links. Link geometry is
/// precomputed; every instance starts inactive.
pub fn populate_pools(graph: &LineageGraph) -> ScenePools {
    let start = Instant::now();
    let mut per_timepoint = vec![0usize; graph.timepoints().max(0) as usize];
    for id in graph.spot_ids() {
        per_timepoint[graph.spot(id).expect("alive").timepoint as usize] += 1;
    }
    let spot_capacity = per_timepoint.iter().copied().max().unwrap_or(0);
    let spots = InstancePool::new(InstanceKind::Spot, spot_capacity);

    let mut links = InstancePool::new(InstanceKind::Link, graph.link_count());
    let mut link_slots = vec![None; graph.link_capacity()];
    let mut link_slot_ids = Vec::with_capacity(graph.link_count());
    for (slot, id) in graph.link_ids().enumerate() {
        let l = graph.link(id).expect("alive");
        let from = graph.spot(SpotId(l.source)).expect("alive").position;
        let to = graph.spot(SpotId(l.target)).expect("alive").position;
        links.instances[slot].transform = link_transform(from, to);
        link_slots[id.index()] = Some(slot);
        link_slot_ids.push(Some(id));
    }
    ScenePools {
        spots,
        links,
        spot_slots: vec![None; spot_capacity],
        link_slots,
        link_slot_ids,
        population_seconds: start.elapsed().as_secs_f64(),
    }
}

impl ScenePools {
    /// Spot shown in spot-instance `slot`, if any.
    pub fn spot_in_slot(&self, slot: usize) -> Option<SpotId> {
        self.spot_slots.get(slot).copied().flatten()
    }

    pub fn link_slot(&self, id: LinkId) -> Option<usize> {
        self.link_slots.get(id.index()).copied().flatten()
    }

    /// Activates the spots of timepoint `t` and the links inside the window,
    /// growing either pool when needed. Spots take their tag color when
    /// tagged and the colormap color of `t` otherwise; links use the colormap
    /// at their earlier endpoint.
    pub fn update_for_timepoint(
        &mut self,
        graph: &LineageGraph,
        t: i32,
        window: &mut VisibilityWindow,
        cmap: &ColorMap,
    ) -> FrameStats {
        if window.is_stale(graph) {
            window.refresh(graph);
        }
        self.spots.deactivate_all();
        self.links.deactivate_all();
        self.spot_slots.iter_mut().for_each(|s| *s = None);

        let spots = graph.spots_at_timepoint(t);
        let spot_pool_grew = self.spots.reserve(spots.len());
        self.spot_slots.resize(self.spots.capacity(), None);
        let time_color = track_color(cmap, t as f64);
        for (slot, &id) in spots.iter().enumerate() {
            let s = graph.spot(id).expect("alive");
            self.spots.instances[slot] = Instance {
                active: true,
                transform: spot_transform(s.position, &s.covariance),
                color: s.tag.map_or(time_color, |tag| graph.tags().color(tag)),
            };
            self.spot_slots[slot] = Some(id);
        }

        let visible = window.visible_links(graph, t).expect("window refreshed above");
        let mut link_pool_grew = false;
        for id in &visible {
            let slot = match self.link_slot(*id) {
                Some(slot) => slot,
                None => {
                    let slot = self.link_slot_ids.len();
                    link_pool_grew |= self.links.reserve(slot + 1);
                    self.link_slot_ids.push(Some(*id));
                    if self.link_slots.len() <= id.index() {
                        self.link_slots.resize(id.index() + 1, None);
                    }
                    self.link_slots[id.index()] = Some(slot);
                    slot
                }
            };
            let l = graph.link(*id).expect("alive");
            let from = graph.spot(SpotId(l.source)).expect("alive");
            let to = graph.spot(SpotId(l.target)).expect("alive");
            let (t0, _) = window.range(*id).expect("indexed");
            self.links.instances[slot] = Instance {
                active: true,
                transform: link_transform(from.position, to.position),
                color: track_color(cmap, t0 as f64),
            };
        }

        FrameStats {
            timepoint: t,
            active_spots: spots.len(),
            active_links: visible.len(),
            spot_capacity: self.spots.capacity(),
            link_capacity: self.links.capacity(),
            spot_pool_grew,
            link_pool_grew,
        }
    }

    /// Active instances, for tests and debugging.
    pub fn frame_dump(&self, timepoint: i32) -> FrameDump {
        let mut instances = Vec::new();
        for (slot, inst) in self.spots.instances.iter().enumerate() {
            if let (true, Some(id)) = (inst.active, self.spot_in_slot(slot)) {
                instances.push(DumpedInstance { kind: InstanceKind::Spot, id: id.0, transform: inst.transform, rgba: inst.color });
            }
        }
        for (slot, inst) in self.links.instances.iter().enumerate() {
            if let (true, Some(Some(id))) = (inst.active, self.link_slot_ids.get(slot)) {
                instances.push(DumpedInstance { kind: InstanceKind::Link, id: id.0, transform: inst.transform, rgba: inst.color });
            }
        }
        FrameDump { timepoint, instances }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpedInstance {
    pub kind: InstanceKind,
    pub id: u32,
    pub transform: Transform,
    pub rgba: Rgba,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDump {
    pub timepoint: i32,
    pub instances: Vec<DumpedInstance>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(t: &Transform, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|r| {
            (0..3).map(|c| t[r * 4 + c] as f64 * p[c]).sum::<f64>() + t[r * 4 + 3] as f64
        })
    }

    #[test]
    fn isotropic_spot_is_scaled_sphere() {
        let t = spot_transform([1.0, 2.0, 3.0], &Covariance::isotropic(2.0));
        let p = apply(&t, [1.0, 0.0, 0.0]);
        let d = ((p[0] - 1.0).powi(2) + (p[1] - 2.0).powi(2) + (p[2] - 3.0).powi(2)).sqrt();
        assert!((d - 2.0).abs() < 1e-5);
    }

    #[test]
    fn degenerate_covariance_gets_min_radius() {
        let cov = Covariance::from_matrix([[4.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let t = spot_transform([0.0; 3], &cov);
        let mut lens: Vec<f64> = (0..3)
            .map(|c| (0..3).map(|r| (t[r * 4 + c] as f64).powi(2)).sum::<f64>().sqrt())
            .collect();
        lens.sort_by(f64::total_cmp);
        assert!((lens[0] - MIN_SPOT_RADIUS).abs() < 1e-6);
        assert!((lens[1] - MIN_SPOT_RADIUS).abs() < 1e-6);
        assert!((lens[2] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn link_cylinder_spans_endpoints() {
        let (a, b) = ([1.0, 1.0, 1.0], [4.0, 5.0, 1.0]);
        let t = link_transform(a, b);
        let p0 = apply(&t, [0.0; 3]);
        let p1 = apply(&t, [0.0, 1.0, 0.0]);
        for k in 0..3 {
            assert!((p0[k] - a[k]).abs() < 1e-5 && (p1[k] - b[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn pool_growth_keeps_indices() {
        let mut pool = InstancePool::new(InstanceKind::Spot, 4);
        pool.instances[2].color = [0.5; 4];
        assert!(!pool.reserve(4));
        assert!(pool.reserve(5));
        assert_eq!(pool.capacity(), 6);
        assert_eq!(pool.get(2).unwrap().color, [0.5; 4]);
        assert!(pool.reserve(20));
        assert_eq!(pool.capacity(), 20);
    }

    #[test]
    fn empty_graph_pools() {
        let g = LineageGraph::new(5);
        let pools = populate_pools(&g);
        assert_eq!((pools.spots.capacity(), pools.links.capacity()), (0, 0));
        assert!(pools.population_seconds < 0.1);
    }
}
