//! Designs: unordered sets of curves over shared control points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use crate::geometry::{Curve, Point, EPS_ID};

/// The game state: a set of curves. Control points that lie within
/// [`EPS_ID`] of each other are merged into one shared point, so editing a
/// point edits every curve that references it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "DesignRepr", into = "DesignRepr")]
pub struct Design {
    curves: Vec<Curve>,
    index: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub point: Point,
    /// Indices into [`Design::curves`], ascending.
    pub curves: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignRepr {
    curves: Vec<Curve>,
}

impl From<DesignRepr> for Design {
    fn from(r: DesignRepr) -> Self {
        Design::from_curves(r.curves)
    }
}

impl From<Design> for DesignRepr {
    fn from(d: Design) -> Self {
        DesignRepr { curves: d.curves }
    }
}

impl Design {
    pub fn empty() -> Self {
        Design::default()
    }

    /// Builds a design from already-validated curves: nearby control points
    /// are snapped onto the first one seen and repeated curves are dropped.
    pub fn from_curves(curves: impl IntoIterator<Item = Curve>) -> Design {
        let mut canon: Vec<Point> = Vec::new();
        let mut out: Vec<Curve> = Vec::new();
        for curve in curves {
            let snapped = curve
                .map_points(|p| match canon.iter().find(|q| q.dist(p) <= EPS_ID) {
                    Some(q) => *q,
                    None => p,
                })
                // snapping can only collapse a curve whose points were within
                // EPS_ID of each other; such a curve is dropped
                .ok();
            let Some(snapped) = snapped else { continue };
            for &p in snapped.control_points() {
                if !canon.iter().any(|q| q.key() == p.key()) {
                    canon.push(p);
                }
            }
            if !out.iter().any(|c| c.matches(&snapped, EPS_ID)) {
                out.push(snapped);
            }
        }
        Design::with_curves_unchecked(out)
    }

    /// Assumes shared points are already bit-identical and no curve repeats.
    pub(crate) fn with_curves_unchecked(curves: Vec<Curve>) -> Design {
        let index = build_index(&curves);
        Design { curves, index }
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Distinct control points with the curves referencing each, sorted
    /// lexicographically by point.
    pub fn point_index(&self) -> &[IndexEntry] {
        &self.index
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.index.iter().map(|e| e.point)
    }

    /// The existing control point within [`EPS_ID`] of `p`, nearest first,
    /// ties broken by lexicographic `(x, y)`.
    pub fn canonicalize_point(&self, p: Point) -> Option<Point> {
        self.index
            .iter()
            .map(|e| (e.point.dist(p), e.point))
            .filter(|(d, _)| *d <= EPS_ID)
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.lex_cmp(&b.1)))
            .map(|(_, q)| q)
    }

    /// Index of the curve matching `curve` within [`EPS_ID`].
    pub fn find_curve(&self, curve: &Curve) -> Option<usize> {
        self.curves.iter().position(|c| c.matches(curve, EPS_ID))
    }

    pub(crate) fn contains_exact(&self, curve: &Curve) -> bool {
        self.curves.iter().any(|c| c.same_bits(curve))
    }

    /// Rebuilds the point index from scratch and compares it with the stored one.
    pub fn index_is_consistent(&self) -> bool {
        build_index(&self.curves) == self.index
    }

    /// Curves sorted by kind then control points; a stable canonical listing.
    pub fn sorted_curves(&self) -> Vec<Curve> {
        let mut v = self.curves.clone();
        v.sort_by(|a, b| a.canonical_cmp(b));
        v
    }

    /// Whether every control point lies on the play canvas.
    pub fn in_canvas(&self) -> bool {
        self.points().all(Point::in_canvas)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("design serialization is infallible")
    }
}

fn build_index(curves: &[Curve]) -> Vec<IndexEntry> {
    let mut map: BTreeMap<(u64, u64), IndexEntry> = BTreeMap::new();
    for (i, c) in curves.iter().enumerate() {
        for &p in c.control_points() {
            let entry = map.entry(p.key()).or_insert_with(|| IndexEntry {
                point: p,
                curves: Vec::new(),
            });
            if entry.curves.last() != Some(&i) {
                entry.curves.push(i);
            }
        }
    }
    let mut v: Vec<IndexEntry> = map.into_values().collect();
    v.sort_by(|a, b| a.point.lex_cmp(&b.point));
    v
}

/// True iff the curves of `a` and `b` can be paired one-to-one with each
/// pair matching by kind and control points within `eps`.
pub fn design_equal(a: &Design, b: &Design, eps: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let n = a.len();
    let adj: Vec<Vec<usize>> = a
        .curves
        .iter()
        .map(|ca| (0..n).filter(|&j| ca.matches(&b.curves[j], eps)).collect())
        .collect();
    // bipartite matching by augmenting paths
    let mut owner: Vec<Option<usize>> = vec![None; n];
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    (0..n).all(|u| {
        let mut seen = vec![false; n];
        augment(u, &adj, &mut seen, &mut owner)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn canonicalize_examples() {
        let d = Design::from_curves([Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap()]);
        assert_eq!(d.canonicalize_point(p(0.0, 0.0000005)), Some(p(0.0, 0.0)));
        assert_eq!(d.canonicalize_point(p(5.0, 5.0)), None);

        let d = Design::from_curves([Curve::line(p(1.0, 0.0), p(-1.0, 0.0)).unwrap()]);
        assert_eq!(d.canonicalize_point(p(0.0000002, 0.0)), None);
    }

    #[test]
    fn canonicalize_prefers_nearest_then_lexicographic() {
        let d = Design::from_curves([
            Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap(),
            Curve::line(p(0.0, 2f64.powi(-19)), p(5.0, 5.0)).unwrap(),
        ]);
        // the two near points are ~1.9e-6 apart so both stay distinct
        assert_eq!(d.points().count(), 4);
        assert_eq!(d.canonicalize_point(p(0.0, 1.5e-6)), Some(p(0.0, 2f64.powi(-19))));
        // exactly halfway: lexicographically smaller wins
        assert_eq!(d.canonicalize_point(p(0.0, 2f64.powi(-20))), Some(p(0.0, 0.0)));
    }

    #[test]
    fn from_curves_snaps_and_dedups() {
        let d = Design::from_curves([
            Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap(),
            Curve::line(p(0.0, 1e-7), p(0.0, 5.0)).unwrap(),
            Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap(),
        ]);
        assert_eq!(d.len(), 2);
        assert_eq!(d.curves()[1].control_points()[0], p(0.0, 0.0));
        let shared = d.point_index().iter().find(|e| e.point == p(0.0, 0.0)).unwrap();
        assert_eq!(shared.curves, vec![0, 1]);
        assert!(d.index_is_consistent());
    }

    #[test]
    fn design_equal_examples() {
        let a = Design::from_curves([
            Curve::circle(p(0.0, 1.0), p(0.0, -1.0)).unwrap(),
            Curve::line(p(0.0, 0.0), p(1.0, 0.0)).unwrap(),
        ]);
        assert!(design_equal(&a, &a, 0.0));
        let b = Design::from_curves([
            Curve::line(p(0.0, 0.0), p(1.0, 0.0)).unwrap(),
            Curve::circle(p(0.0, -1.0), p(0.0, 1.0)).unwrap(),
        ]);
        assert!(design_equal(&a, &b, 0.0));

        let l1 = Design::from_curves([Curve::line(p(0.0, 0.0), p(1.0, 0.0)).unwrap()]);
        let l2 = Design::from_curves([Curve::line(p(0.0, 0.0), p(1.0, 0.01)).unwrap()]);
        assert!(!design_equal(&l1, &l2, 1e-6));
        assert!(!design_equal(&l1, &Design::empty(), 1e-6));
    }

    #[test]
    fn json_is_canonical() {
        let d = Design::from_curves([Curve::circle(p(0.0, -18.0), p(0.0, 18.0)).unwrap()]);
        let s = d.to_json();
        assert_eq!(s, r#"{"curves":[{"type":"circle","control_points":[[0.0,-18.0],[0.0,18.0]]}]}"#);
        let back: Design = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Design>(r#"{"curves":[],"extra":1}"#).is_err());
    }
}
