//! The Maker's edit vocabulary and its transition semantics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::Design;
use crate::geometry::{Curve, GeometryError, Point, EPS_ID};

/// One editing command. Serializes as a tool call:
/// `{"name": "move_point", "arguments": {"point": [x, y], "new_point": [x, y]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "arguments", rename_all = "snake_case")]
pub enum Action {
    MakeCurve(Curve),
    RemoveCurve(Curve),
    MoveCurve {
        #[serde(flatten)]
        curve: Curve,
        delta: Point,
    },
    MovePoint {
        point: Point,
        new_point: Point,
    },
    DeletePoint {
        point: Point,
    },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::MakeCurve(_) => "make_curve",
            Action::RemoveCurve(_) => "remove_curve",
            Action::MoveCurve { .. } => "move_curve",
            Action::MovePoint { .. } => "move_point",
            Action::DeletePoint { .. } => "delete_point",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("unresolved reference: no {0} in the design")]
    UnresolvedReference(String),
    #[error("edit would produce a degenerate curve: {0}")]
    DegenerateResult(#[from] GeometryError),
    #[error("point {0} is outside the canvas")]
    OutOfBounds(Point),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyWarning {
    /// `make_curve` of a curve already present; nothing changed.
    DuplicateCurve,
    /// A move made distinct curves coincide; the copies were merged.
    MergedCurves { dropped: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyMode {
    /// The first failing action aborts the whole sequence.
    #[default]
    Strict,
    /// Failing actions are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplyReport {
    pub design: Design,
    pub skipped: Vec<usize>,
    pub warnings: Vec<(usize, ApplyWarning)>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("action {index}: {error}")]
pub struct ApplyFailure {
    pub index: usize,
    pub error: ActionError,
}

impl Design {
    pub fn apply(&self, action: &Action) -> Result<Design, ActionError> {
        self.apply_traced(action).map(|(d, _)| d)
    }

    /// Like [`Design::apply`] but also reports no-op or merge warnings.
    pub fn apply_traced(
        &self,
        action: &Action,
    ) -> Result<(Design, Option<ApplyWarning>), ActionError> {
        match action {
            Action::MakeCurve(curve) => {
                if let Some(p) = curve.control_points().iter().find(|p| !p.in_canvas()) {
                    return Err(ActionError::OutOfBounds(*p));
                }
                let snapped = curve.map_points(|p| self.canonicalize_point(p).unwrap_or(p))?;
                if self.find_curve(&snapped).is_some() {
                    return Ok((self.clone(), Some(ApplyWarning::DuplicateCurve)));
                }
                let mut curves = self.curves().to_vec();
                curves.push(snapped);
                Ok((Design::with_curves_unchecked(curves), None))
            }
            Action::RemoveCurve(curve) => {
                let idx = self.resolve_curve(curve)?;
                let mut curves = self.curves().to_vec();
                curves.remove(idx);
                Ok((Design::with_curves_unchecked(curves), None))
            }
            Action::MoveCurve { curve, delta } => {
                let idx = self.resolve_curve(curve)?;
                let mut moves: Vec<(Point, Point)> = Vec::new();
                for &p in self.curves()[idx].control_points() {
                    if !moves.iter().any(|(from, _)| from.key() == p.key()) {
                        moves.push((p, p + *delta));
                    }
                }
                self.relocate(&moves)
            }
            Action::MovePoint { point, new_point } => {
                let from = self.resolve_point(*point)?;
                self.relocate(&[(from, *new_point)])
            }
            Action::DeletePoint { point } => {
                let target = self.resolve_point(*point)?;
                let curves = self
                    .curves()
                    .iter()
                    .filter(|c| !c.control_points().iter().any(|p| p.key() == target.key()))
                    .copied()
                    .collect();
                Ok((Design::with_curves_unchecked(curves), None))
            }
        }
    }

    /// Applies `actions` left to right.
    pub fn apply_all(&self, actions: &[Action], mode: ApplyMode) -> Result<ApplyReport, ApplyFailure> {
        let mut design = self.clone();
        let mut skipped = Vec::new();
        let mut warnings = Vec::new();
        for (index, action) in actions.iter().enumerate() {
            match design.apply_traced(action) {
                Ok((next, warning)) => {
                    design = next;
                    if let Some(w) = warning {
                        warnings.push((index, w));
                    }
                }
                Err(error) => match mode {
                    ApplyMode::Strict => return Err(ApplyFailure { index, error }),
                    ApplyMode::Lenient => {
                        log::debug!("skipping action {index} ({}): {error}", action.name());
                        skipped.push(index);
                    }
                },
            }
        }
        Ok(ApplyReport {
            design,
            skipped,
            warnings,
        })
    }

    /// Lenient application; never fails.
    pub fn apply_lenient(&self, actions: &[Action]) -> ApplyReport {
        self.apply_all(actions, ApplyMode::Lenient)
            .expect("lenient application skips failures")
    }

    fn resolve_curve(&self, curve: &Curve) -> Result<usize, ActionError> {
        self.find_curve(curve).ok_or_else(|| {
            ActionError::UnresolvedReference(format!(
                "{} {:?}",
                curve.kind(),
                curve.control_points().iter().map(|p| <[f64; 2]>::from(*p)).collect::<Vec<_>>()
            ))
        })
    }

    fn resolve_point(&self, p: Point) -> Result<Point, ActionError> {
        self.canonicalize_point(p)
            .ok_or_else(|| ActionError::UnresolvedReference(format!("point {p}")))
    }

    /// Moves canonical points, reshaping every curve that references them.
    fn relocate(&self, moves: &[(Point, Point)]) -> Result<(Design, Option<ApplyWarning>), ActionError> {
        let moved = |p: Point| moves.iter().any(|(from, _)| from.key() == p.key());
        let mut targets = Vec::with_capacity(moves.len());
        for &(from, to) in moves {
            if !to.in_canvas() {
                return Err(ActionError::OutOfBounds(to));
            }
            // land exactly on a stationary point when within tolerance
            let snapped = self
                .points()
                .filter(|q| !moved(*q))
                .map(|q| (q.dist(to), q))
                .filter(|(d, _)| *d <= EPS_ID)
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.lex_cmp(&b.1)))
                .map_or(to, |(_, q)| q);
            targets.push((from, snapped));
        }
        let mut curves: Vec<Curve> = Vec::with_capacity(self.len());
        let mut dropped = 0;
        for c in self.curves() {
            let next = c.map_points(|p| {
                targets
                    .iter()
                    .find(|(from, _)| from.key() == p.key())
                    .map_or(p, |(_, to)| *to)
            })?;
            if curves.iter().any(|k| k.matches(&next, EPS_ID)) {
                dropped += 1;
            } else {
                curves.push(next);
            }
        }
        let warning = (dropped > 0).then_some(ApplyWarning::MergedCurves { dropped });
        Ok((Design::with_curves_unchecked(curves), warning))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::design_equal;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn corner() -> Design {
        Design::from_curves([
            Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap(),
            Curve::line(p(0.0, 0.0), p(0.0, 5.0)).unwrap(),
        ])
    }

    #[test]
    fn move_point_reshapes_shared_curves() {
        let d = corner()
            .apply(&Action::MovePoint {
                point: p(0.0, 0.0),
                new_point: p(1.0, 1.0),
            })
            .unwrap();
        let want = Design::from_curves([
            Curve::line(p(1.0, 1.0), p(5.0, 0.0)).unwrap(),
            Curve::line(p(1.0, 1.0), p(0.0, 5.0)).unwrap(),
        ]);
        assert!(design_equal(&d, &want, 0.0));
        assert!(d.index_is_consistent());
    }

    #[test]
    fn make_circle_from_tool_call() {
        let c = Curve::circle(p(0.0, -18.0), p(0.0, 18.0)).unwrap();
        let d = Design::empty().apply(&Action::MakeCurve(c)).unwrap();
        assert_eq!(d.len(), 1);
        let params = d.curves()[0].circle_params().unwrap();
        assert_eq!((params.center, params.radius), (p(0.0, 0.0), 18.0));
    }

    #[test]
    fn delete_point_cascades() {
        let d = corner().apply(&Action::DeletePoint { point: p(0.0, 0.0) }).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.canonicalize_point(p(0.0, 0.0)), None);
    }

    #[test]
    fn move_curve_drags_shared_points() {
        let line = Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap();
        let d = corner()
            .apply(&Action::MoveCurve {
                curve: line,
                delta: p(0.0, 1.0),
            })
            .unwrap();
        let want = Design::from_curves([
            Curve::line(p(0.0, 1.0), p(5.0, 1.0)).unwrap(),
            Curve::line(p(0.0, 1.0), p(0.0, 5.0)).unwrap(),
        ]);
        assert!(design_equal(&d, &want, 0.0));
    }

    #[test]
    fn error_paths() {
        let d = corner();
        assert!(matches!(
            d.apply(&Action::DeletePoint { point: p(9.0, 9.0) }),
            Err(ActionError::UnresolvedReference(_))
        ));
        assert!(matches!(
            d.apply(&Action::MovePoint {
                point: p(5.0, 0.0),
                new_point: p(0.0, 0.0)
            }),
            Err(ActionError::DegenerateResult(_))
        ));
        assert!(matches!(
            d.apply(&Action::MovePoint {
                point: p(5.0, 0.0),
                new_point: p(25.0, 0.0)
            }),
            Err(ActionError::OutOfBounds(_))
        ));
        let far = Curve::line(p(0.0, 0.0), p(21.0, 0.0)).unwrap();
        assert!(matches!(
            d.apply(&Action::MakeCurve(far)),
            Err(ActionError::OutOfBounds(_))
        ));
    }

    #[test]
    fn duplicate_make_is_a_warning() {
        let line = Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap();
        let (d, w) = corner().apply_traced(&Action::MakeCurve(line)).unwrap();
        assert_eq!(w, Some(ApplyWarning::DuplicateCurve));
        assert_eq!(d, corner());
    }

    #[test]
    fn make_snaps_to_existing_points() {
        let line = Curve::line(p(0.0, 5e-7), p(-5.0, 0.0)).unwrap();
        let d = corner().apply(&Action::MakeCurve(line)).unwrap();
        let origin = d.point_index().iter().find(|e| e.point == p(0.0, 0.0)).unwrap();
        assert_eq!(origin.curves.len(), 3);
    }

    #[test]
    fn apply_all_examples() {
        let r = Design::empty().apply_all(&[], ApplyMode::Strict).unwrap();
        assert!(r.design.is_empty() && r.skipped.is_empty());

        let actions = [
            Action::MakeCurve(Curve::line(p(0.0, 0.0), p(5.0, 0.0)).unwrap()),
            Action::MovePoint {
                point: p(5.0, 0.0),
                new_point: p(5.0, 5.0),
            },
        ];
        let r = Design::empty().apply_all(&actions, ApplyMode::Strict).unwrap();
        let folded = Design::empty().apply(&actions[0]).unwrap().apply(&actions[1]).unwrap();
        assert_eq!(r.design, folded);
        assert_eq!(
            r.design.curves(),
            &[Curve::line(p(0.0, 0.0), p(5.0, 5.0)).unwrap()]
        );

        let actions = [
            Action::MakeCurve(Curve::circle(p(0.0, -18.0), p(0.0, 18.0)).unwrap()),
            Action::RemoveCurve(Curve::line(p(9.0, 9.0), p(8.0, 8.0)).unwrap()),
            Action::MovePoint {
                point: p(0.0, -18.0),
                new_point: p(0.0, -16.0),
            },
        ];
        let r = Design::empty().apply_all(&actions, ApplyMode::Lenient).unwrap();
        assert_eq!(r.skipped, vec![1]);
        assert_eq!(
            r.design.curves(),
            &[Curve::circle(p(0.0, -16.0), p(0.0, 18.0)).unwrap()]
        );
        let err = Design::empty().apply_all(&actions, ApplyMode::Strict).unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn tool_call_json() {
        let a: Action = serde_json::from_str(
            r#"{"name":"make_curve","arguments":{"type":"circle","control_points":[[0.0,-18.0],[0.0,18.0]]}}"#,
        )
        .unwrap();
        assert_eq!(
            a,
            Action::MakeCurve(Curve::circle(p(0.0, -18.0), p(0.0, 18.0)).unwrap())
        );
        let a: Action = serde_json::from_str(
            r#"{"name": "move_point", "arguments": {"point": [0.0, -15.0], "new_point": [0.0, -16.0]}}"#,
        )
        .unwrap();
        assert_eq!(
            a,
            Action::MovePoint {
                point: p(0.0, -15.0),
                new_point: p(0.0, -16.0)
            }
        );
        let mv = Action::MoveCurve {
            curve: Curve::line(p(0.0, 0.0), p(1.0, 0.0)).unwrap(),
            delta: p(0.5, -1.0),
        };
        let s = serde_json::to_string(&mv).unwrap();
        assert_eq!(
            s,
            r#"{"name":"move_curve","arguments":{"type":"line","control_points":[[0.0,0.0],[1.0,0.0]],"delta":[0.5,-1.0]}}"#
        );
        assert_eq!(serde_json::from_str::<Action>(&s).unwrap(), mv);
        assert_eq!(
            serde_json::to_string(&Action::DeletePoint { point: p(1.0, 2.0) }).unwrap(),
            r#"{"name":"delete_point","arguments":{"point":[1.0,2.0]}}"#
        );
    }
}
