//! Per-frame geometric feature vectors.
//!
//! A vector for an `m`-point frame is laid out as
//! `[x1, y1, ..., xm, ym][d(i,j) for i<j][theta(i,j) for i<j]`, with the
//! unordered pairs `(i, j)` enumerated in lexicographic order. Coordinates
//! are screen pixels, used without normalization. Angles are radians in
//! `(-pi, pi]`, measured from the +x axis to the vector `q - p`.

use crate::error::{Error, Result};
use crate::session::{Frame, Modality, Point2, Session};

pub fn pair_distance(p: Point2, q: Point2) -> Result<f64> {
    if !p.is_finite() || !q.is_finite() {
        return Err(Error::NonFinite("pair distance input"));
    }
    Ok((q.x - p.x).hypot(q.y - p.y))
}

pub fn pair_angle(p: Point2, q: Point2) -> Result<f64> {
    if !p.is_finite() || !q.is_finite() {
        return Err(Error::NonFinite("pair angle input"));
    }
    if p == q {
        return Err(Error::DegeneratePair { x: p.x, y: p.y });
    }
    let dy = q.y - p.y;
    // atan2 returns -pi for (-0.0, negative x); fold it onto +pi.
    let dy = if dy == 0.0 { 0.0 } else { dy };
    Ok(dy.atan2(q.x - p.x))
}

/// Number of unordered point pairs, `C(m, 2)`.
pub fn pair_count(points: usize) -> usize {
    points * points.saturating_sub(1) / 2
}

pub fn feature_dimension(modality: Modality) -> Result<usize> {
    if !modality.is_geometric() {
        return Err(Error::NoGeometry(modality));
    }
    let m = modality.point_count();
    Ok(2 * m + 2 * pair_count(m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub modality: Modality,
    pub frame_index: u64,
    pub values: Vec<f64>,
    /// Pairs `(i, j)` whose points coincided; their angle slot holds 0.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

impl FeatureVector {
    pub fn coordinates(&self) -> &[f64] {
        &self.values[..2 * self.modality.point_count()]
    }

    pub fn distances(&self) -> &[f64] {
        let m = self.modality.point_count();
        &self.values[2 * m..2 * m + pair_count(m)]
    }

    pub fn angles(&self) -> &[f64] {
        let m = self.modality.point_count();
        &self.values[2 * m + pair_count(m)..]
    }
}

pub fn extract_features(frame: &Frame, modality: Modality) -> Result<FeatureVector> {
    let dim = feature_dimension(modality)?;
    let m = modality.point_count();
    if frame.points.len() != m {
        return Err(Error::Shape {
            expected: m,
            found: frame.points.len(),
        });
    }
    let pairs = pair_count(m);
    let mut values = vec![0.0; dim];
    let mut degenerate_pairs = Vec::new();
    for (i, p) in frame.points.iter().enumerate() {
        values[2 * i] = p.x;
        values[2 * i + 1] = p.y;
    }
    let (dist_block, angle_block) = values[2 * m..].split_at_mut(pairs);
    let mut slot = 0;
    for i in 0..m {
        for j in i + 1..m {
            let (p, q) = (frame.points[i], frame.points[j]);
            dist_block[slot] = pair_distance(p, q)?;
            angle_block[slot] = match pair_angle(p, q) {
                Ok(theta) => theta,
                Err(Error::DegeneratePair { .. }) => {
                    degenerate_pairs.push((i, j));
                    0.0
                }
                Err(e) => return Err(e),
            };
            slot += 1;
        }
    }
    Ok(FeatureVector {
        modality,
        frame_index: frame.index,
        values,
        degenerate_pairs,
    })
}

/// One feature vector per frame, in frame order.
pub fn extract_session(session: &Session) -> Result<Vec<FeatureVector>> {
    session
        .frames
        .iter()
        .map(|f| extract_features(f, session.modality))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn distances() {
        assert_eq!(pair_distance(p(0.0, 0.0), p(3.0, 4.0)).unwrap(), 5.0);
        assert_eq!(pair_distance(p(2.0, 7.0), p(2.0, 7.0)).unwrap(), 0.0);
        assert_eq!(pair_distance(p(1.0, 1.0), p(4.0, 5.0)).unwrap(), 5.0);
        assert!(pair_distance(p(f64::NAN, 0.0), p(1.0, 1.0)).is_err());
    }

    #[test]
    fn angles() {
        assert!((pair_angle(p(0.0, 0.0), p(1.0, 1.0)).unwrap() - PI / 4.0).abs() < 1e-15);
        assert_eq!(pair_angle(p(0.0, 0.0), p(-1.0, 0.0)).unwrap(), PI);
        assert_eq!(pair_angle(p(0.0, -0.0), p(-1.0, 0.0)).unwrap(), PI);
        assert_eq!(pair_angle(p(0.0, 0.0), p(0.0, -2.0)).unwrap(), -PI / 2.0);
        assert!(matches!(
            pair_angle(p(3.0, 3.0), p(3.0, 3.0)),
            Err(Error::DegeneratePair { .. })
        ));
    }

    #[test]
    fn dimensions() {
        assert_eq!(feature_dimension(Modality::Face).unwrap(), 3660);
        assert_eq!(feature_dimension(Modality::Head).unwrap(), 156);
        assert_eq!(feature_dimension(Modality::Hand).unwrap(), 72);
        assert_eq!(feature_dimension(Modality::Body).unwrap(), 210);
        assert!(matches!(
            feature_dimension(Modality::Speech),
            Err(Error::NoGeometry(Modality::Speech))
        ));
    }

    #[test]
    fn coincident_points_are_flagged() {
        let mut pts: Vec<Point2> = (0..8).map(|i| p(i as f64, 2.0 * i as f64)).collect();
        pts[5] = pts[2];
        let fv = extract_features(&Frame::new(0, pts), Modality::Hand).unwrap();
        assert_eq!(fv.degenerate_pairs, vec![(2, 5)]);
        // pair (2,5) slot: pairs from rows 0 and 1 (7 + 6), then j-i-1 = 2
        assert_eq!(fv.angles()[7 + 6 + 2], 0.0);
        assert_eq!(fv.distances()[7 + 6 + 2], 0.0);
    }

    #[test]
    fn wrong_point_count_is_rejected() {
        let frame = Frame::new(0, vec![p(0.0, 0.0); 7]);
        assert!(matches!(
            extract_features(&frame, Modality::Hand),
            Err(Error::Shape { expected: 8, found: 7 })
        ));
    }

    #[test]
    fn session_extraction() {
        let frame = Frame::new(0, (0..8).map(|i| p(i as f64, 1.0 + i as f64 * 0.5)).collect());
        let mut session = Session {
            subject_id: "s".into(),
            session_id: "1".into(),
            label: None,
            modality: Modality::Hand,
            frames: Vec::new(),
        };
        assert!(extract_session(&session).unwrap().is_empty());
        session.frames = (0..100)
            .map(|n| Frame::new(n, frame.points.clone()))
            .collect();
        let vectors = extract_session(&session).unwrap();
        assert_eq!(vectors.len(), 100);
        assert!(vectors.iter().all(|v| v.values == vectors[0].values));
        assert_eq!(vectors[99].frame_index, 99);
    }

    fn point() -> impl Strategy<Value = Point2> {
        (-500.0f64..500.0, -500.0f64..500.0).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in point(), b in point(), c in point()) {
            let ab = pair_distance(a, b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, pair_distance(b, a).unwrap());
            let ac = pair_distance(a, c).unwrap();
            let cb = pair_distance(c, b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        #[test]
        fn angle_range(a in point(), b in point()) {
            prop_assume!(a != b);
            let t = pair_angle(a, b).unwrap();
            prop_assert!(t > -PI && t <= PI);
        }
    }
}
