//! Rigid alignment of a pinned water molecule with the canonical frame.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Rotation into the canonical frame and whether H1/H2 were relabeled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameTransform {
    /// Proper rotation G with canonical = G·lab (O at the origin).
    pub rotation: Matrix3<f64>,
    /// True when the lab H2 is the longer bond and becomes canonical H1.
    pub swapped: bool,
}

impl FrameTransform {
    /// Lab positions (O, H1, H2) to canonical order and frame.
    pub fn to_canonical(&self, lab: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut out: Vec<_> = lab.iter().map(|r| self.rotation * (r - lab[0])).collect();
        if self.swapped {
            out.swap(1, 2);
        }
        out
    }

    /// Canonical-frame vectors (per atom, canonical order) back to lab
    /// order and frame.
    pub fn vectors_to_lab(&self, canonical: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let back = self.rotation.transpose();
        let mut out: Vec<_> = canonical.iter().map(|v| back * v).collect();
        if self.swapped {
            out.swap(1, 2);
        }
        out
    }
}

/// Canonical frame for (O, H1, H2): bonds relabeled so |H1| ≥ |H2|, the
/// bisector of the bond directions along +x, the molecular plane z = 0 and
/// H1 at y > 0. Positions are taken relative to O.
pub fn canonical_frame_transform(positions: &[Vector3<f64>]) -> Result<FrameTransform> {
    if positions.len() != 3 {
        return Err(Error::LengthMismatch(positions.len(), 3));
    }
    let mut h1 = positions[1] - positions[0];
    let mut h2 = positions[2] - positions[0];
    if h1.norm() < 1e-12 || h2.norm() < 1e-12 {
        return Err(Error::DegenerateGeometry);
    }
    let swapped = h2.norm() > h1.norm();
    if swapped {
        std::mem::swap(&mut h1, &mut h2);
    }
    let (u1, u2) = (h1.normalize(), h2.normalize());
    let cross = u2.cross(&u1);
    if cross.norm() < 1e-8 {
        return Err(Error::CollinearGeometry);
    }
    let n = cross.normalize();
    let b = (u1 + u2).normalize();
    let y = n.cross(&b);
    let rotation = Matrix3::from_rows(&[b.transpose(), y.transpose(), n.transpose()]);
    Ok(FrameTransform { rotation, swapped })
}

/// Proper rotation G minimizing Σ‖G·p_i − q_i‖² over centered point sets
/// (Kabsch), for alignment of general molecules.
pub fn kabsch_rotation(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    if p.is_empty() {
        return Err(Error::DegenerateGeometry);
    }
    let n = p.len() as f64;
    let pc: Vector3<f64> = p.iter().sum::<Vector3<f64>>() / n;
    let qc: Vector3<f64> = q.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (a - pc) * (b - qc).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.ok_or(Error::DegenerateGeometry)?, svd.v_t.ok_or(Error::DegenerateGeometry)?);
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    Ok(vt.transpose() * fix * u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rom::sampling::{canonical_positions, WaterParameters};
    use nalgebra::{Rotation3, Unit};

    fn rotation(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
        Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle).into_inner()
    }

    #[test]
    fn canonical_input_gives_identity() {
        let p = canonical_positions(&WaterParameters::new(1.02, 0.98, 2.0));
        let t = canonical_frame_transform(&p).unwrap();
        assert!(!t.swapped);
        assert!((t.rotation - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn recovers_known_rotation() {
        let p = canonical_positions(&WaterParameters::new(1.04, 0.97, -3.0));
        let g = rotation([0.3, -1.0, 0.7], 2.1);
        let lab: Vec<_> = p.iter().map(|r| g * r).collect();
        let t = canonical_frame_transform(&lab).unwrap();
        assert!((t.rotation - g.transpose()).amax() < 1e-12);
        assert!((t.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relabels_shorter_first_bond() {
        let lab = [
            Vector3::zeros(),
            Vector3::new(-0.45, -1.48, -0.97),
            Vector3::new(-0.45, 1.57, -1.07),
        ];
        let t = canonical_frame_transform(&lab).unwrap();
        assert!(t.swapped);
        let c = t.to_canonical(&lab);
        assert!(c[1].norm() >= c[2].norm());
        assert!(c.iter().all(|r| r.z.abs() < 1e-12));
        assert!(c[1].y > 0.0 && c[2].y < 0.0);
        // bisector along +x
        let b = c[1].normalize() + c[2].normalize();
        assert!(b.y.abs() < 1e-12 && b.x > 0.0);
        // round trip of per-atom vectors
        let back = t.vectors_to_lab(&c);
        for (a, b) in back.iter().zip(&lab) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn collinear_is_rejected() {
        let lab = [
            Vector3::zeros(),
            Vector3::new(1.8, 0.0, 0.0),
            Vector3::new(-1.7, 0.0, 0.0),
        ];
        assert!(matches!(
            canonical_frame_transform(&lab),
            Err(Error::CollinearGeometry)
        ));
    }

    #[test]
    fn kabsch_recovers_rotation() {
        let p = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.5, 0.2, -0.3),
            Vector3::new(-0.4, 1.1, 0.8),
            Vector3::new(0.3, -0.9, 1.2),
        ];
        let g = rotation([1.0, 2.0, 0.5], -0.8);
        let q: Vec<_> = p.iter().map(|r| g * r + Vector3::new(0.1, 0.2, 0.3)).collect();
        let k = kabsch_rotation(&p, &q).unwrap();
        assert!((k - g).amax() < 1e-12);
    }
}
