use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, LineageGraph, LinkId, SpotId, TRUE_POSITIVE};
use crate::volume::distance;

use super::DetectError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LinkingConfig {
    /// World units.
    pub max_link_distance: f64,
    /// Lets a source take up to two targets.
    pub allow_divisions: bool,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig { max_link_distance: 5.0, allow_divisions: false }
    }
}

impl LinkingConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.max_link_distance > 0.0) {
            return Err(DetectError::Config("maxLinkDistance must be positive".into()));
        }
        Ok(())
    }
}

/// Greedy nearest-neighbour linking from `t_from` to `t_from + 1`.
///
/// All pairs within `max_link_distance` are visited by ascending distance,
/// ties broken by (source id, target id). A pair is linked when the target has
/// no incoming link yet and the source is below its out-degree cap (1, or 2
/// with divisions). Links already in the graph count towards both limits, so
/// a second pass adds nothing. The new links form one undo batch.
pub fn link_timepoints(graph: &mut LineageGraph, t_from: i32, config: &LinkingConfig) -> Result<Vec<LinkId>, DetectError> {
    config.validate()?;
    let sources = graph.spots_at_timepoint(t_from);
    let targets = graph.spots_at_timepoint(t_from + 1);
    let mut pairs = Vec::new();
    for &s in &sources {
        let ps = graph.spot(s).expect("alive").position;
        for &t in &targets {
            let d = distance(ps, graph.spot(t).expect("alive").position);
            if d <= config.max_link_distance {
                pairs.push((d, s, t));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let cap = if config.allow_divisions { 2 } else { 1 };
    let mut out_degree: HashMap<SpotId, usize> = sources.iter().map(|&s| (s, graph.outgoing(s).count())).collect();
    let mut in_degree: HashMap<SpotId, usize> = targets.iter().map(|&t| (t, graph.incoming(t).count())).collect();
    let created = graph.transaction(|g| {
        let mut created = Vec::new();
        for (_, s, t) in pairs {
            if in_degree[&t] >= 1 || out_degree[&s] >= cap {
                continue;
            }
            created.push(g.add_link(s, t)?);
            *in_degree.get_mut(&t).expect("target listed") += 1;
            *out_degree.get_mut(&s).expect("source listed") += 1;
        }
        Ok::<_, GraphError>(created)
    })?;
    Ok(created)
}

/// Tags every alive spot at `t` with the true-positive tag, as one batch.
/// Returns how many spots carry the tag afterwards.
pub fn label_all_true_positive(graph: &mut LineageGraph, t: i32) -> usize {
    let spots = graph.spots_at_timepoint(t);
    graph.transaction(|g| {
        for &s in &spots {
            g.set_tag(s, Some(TRUE_POSITIVE))?;
        }
        Ok::<_, GraphError>(())
    })
    .expect("spots are alive and the tag is built in");
    spots.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Covariance;
    use proptest::prelude::*;

    fn add(g: &mut LineageGraph, t: i32, x: f64, y: f64) -> SpotId {
        g.add_spot(t, [x, y, 0.0], Covariance::IDENTITY).unwrap()
    }

    /// Reference: repeatedly pick the globally closest admissible pair.
    fn greedy_oracle(g: &LineageGraph, t: i32, cfg: &LinkingConfig) -> Vec<(SpotId, SpotId)> {
        let sources = g.spots_at_timepoint(t);
        let targets = g.spots_at_timepoint(t + 1);
        let cap = if cfg.allow_divisions { 2 } else { 1 };
        let mut chosen: Vec<(SpotId, SpotId)> = Vec::new();
        loop {
            let mut best: Option<(f64, SpotId, SpotId)> = None;
            for &s in &sources {
                for &tg in &targets {
                    let d = distance(g.spot(s).unwrap().position, g.spot(tg).unwrap().position);
                    let out = chosen.iter().filter(|c| c.0 == s).count();
                    let inn = chosen.iter().filter(|c| c.1 == tg).count();
                    if d > cfg.max_link_distance || out >= cap || inn >= 1 || chosen.contains(&(s, tg)) {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, bs, bt)) => (d, s, tg) < (bd, bs, bt),
                    };
                    if better {
                        best = Some((d, s, tg));
                    }
                }
            }
            match best {
                Some((_, s, tg)) => chosen.push((s, tg)),
                None => break,
            }
        }
        chosen.sort();
        chosen
    }

    fn links_of(g: &LineageGraph) -> Vec<(SpotId, SpotId)> {
        let mut v: Vec<_> = g
            .link_ids()
            .map(|l| {
                let r = g.link(l).unwrap();
                (SpotId(r.source), SpotId(r.target))
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn single_pair_links() {
        let mut g = LineageGraph::new(3);
        add(&mut g, 0, 0.0, 0.0);
        add(&mut g, 1, 1.0, 0.0);
        assert_eq!(link_timepoints(&mut g, 0, &LinkingConfig::default()).unwrap().len(), 1);
    }

    #[test]
    fn crossing_pairs_pick_shortest_first() {
        let mut g = LineageGraph::new(3);
        let a = add(&mut g, 0, 0.0, 0.0);
        let b = add(&mut g, 0, 4.0, 0.0);
        let c = add(&mut g, 1, 2.5, 0.0);
        let d = add(&mut g, 1, 6.5, 0.0);
        // distances: a-c 2.5, b-c 1.5, b-d 2.5, a-d 6.5
        let cfg = LinkingConfig { max_link_distance: 10.0, allow_divisions: false };
        link_timepoints(&mut g, 0, &cfg).unwrap();
        assert_eq!(links_of(&g), vec![(a, d), (b, c)]);
        let mut fresh = LineageGraph::new(3);
        for s in [[0.0, 0.0], [4.0, 0.0]] {
            add(&mut fresh, 0, s[0], s[1]);
        }
        for s in [[2.5, 0.0], [6.5, 0.0]] {
            add(&mut fresh, 1, s[0], s[1]);
        }
        assert_eq!(greedy_oracle(&fresh, 0, &cfg), links_of(&g));
    }

    #[test]
    fn too_far_is_not_linked() {
        let mut g = LineageGraph::new(3);
        add(&mut g, 0, 0.0, 0.0);
        add(&mut g, 1, 9.0, 0.0);
        assert!(link_timepoints(&mut g, 0, &LinkingConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn second_pass_is_a_no_op() {
        let mut g = LineageGraph::new(3);
        add(&mut g, 0, 0.0, 0.0);
        add(&mut g, 1, 1.0, 0.0);
        add(&mut g, 1, 2.0, 0.0);
        let cfg = LinkingConfig { allow_divisions: true, ..Default::default() };
        assert_eq!(link_timepoints(&mut g, 0, &cfg).unwrap().len(), 2);
        assert!(link_timepoints(&mut g, 0, &cfg).unwrap().is_empty());
        assert_eq!(g.recorder().undo_depth(), 4);
    }

    #[test]
    fn label_tp() {
        let mut g = LineageGraph::new(3);
        let ids: Vec<_> = (0..3).map(|i| add(&mut g, 1, i as f64, 0.0)).collect();
        assert_eq!(label_all_true_positive(&mut g, 1), 3);
        assert!(ids.iter().all(|&s| g.tag_name(s) == Some("tp")));
        assert_eq!(label_all_true_positive(&mut g, 0), 0);
        let snap = g.snapshot();
        assert_eq!(label_all_true_positive(&mut g, 1), 3);
        assert_eq!(g.snapshot(), snap);
    }

    proptest! {
        #[test]
        fn greedy_matches_oracle_and_bounds(
            src in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..6),
            dst in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..6),
            max in 0.5f64..8.0,
            div in any::<bool>(),
        ) {
            let mut g = LineageGraph::new(2);
            for (x, y) in &src { add(&mut g, 0, *x, *y); }
            for (x, y) in &dst { add(&mut g, 1, *x, *y); }
            let cfg = LinkingConfig { max_link_distance: max, allow_divisions: div };
            let expected = greedy_oracle(&g, 0, &cfg);
            link_timepoints(&mut g, 0, &cfg).unwrap();
            prop_assert_eq!(links_of(&g), expected);
            let cap = if div { 2 } else { 1 };
            for s in g.spots_at_timepoint(0) {
                prop_assert!(g.outgoing(s).count() <= cap);
            }
            for t in g.spots_at_timepoint(1) {
                prop_assert!(g.incoming(t).count() <= 1);
            }
        }
    }
}
