use nalgebra::Matrix3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Right-handed rotation of `degrees` about `axis`.
pub fn axis_rotation(axis: Axis, degrees: f64) -> Matrix3<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    match axis {
        Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    }
}

/// `R = R_a0(angles[0]) * R_a1(angles[1]) * R_a2(angles[2])`.
pub fn matrix_from_euler(order: [Axis; 3], degrees: [f64; 3]) -> Matrix3<f64> {
    axis_rotation(order[0], degrees[0]) * axis_rotation(order[1], degrees[1]) * axis_rotation(order[2], degrees[2])
}

/// Inverse of [`matrix_from_euler`] for Tait-Bryan orders (three distinct
/// axes). The middle angle lies in [-90, 90]; at gimbal lock the last
/// angle is set to zero.
pub fn euler_from_matrix(order: [Axis; 3], m: &Matrix3<f64>) -> [f64; 3] {
    let (i, j, k) = (order[0].index(), order[1].index(), order[2].index());
    debug_assert!(i != j && j != k && i != k, "Tait-Bryan order required");
    let sign = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    let sb = (sign * m[(i, k)]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    let (alpha, gamma) = if sb.abs() < 1.0 - 1e-12 {
        ((-sign * m[(j, k)]).atan2(m[(k, k)]), (-sign * m[(i, j)]).atan2(m[(i, i)]))
    } else {
        // gamma folded into alpha
        ((sign * m[(k, j)]).atan2(m[(j, j)]), 0.0)
    };
    [alpha.to_degrees(), beta.to_degrees(), gamma.to_degrees()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ORDERS: [[Axis; 3]; 6] = [
        [Axis::X, Axis::Y, Axis::Z],
        [Axis::X, Axis::Z, Axis::Y],
        [Axis::Y, Axis::X, Axis::Z],
        [Axis::Y, Axis::Z, Axis::X],
        [Axis::Z, Axis::X, Axis::Y],
        [Axis::Z, Axis::Y, Axis::X],
    ];

    #[test]
    fn quarter_turn_about_z() {
        let m = axis_rotation(Axis::Z, 90.0);
        let v = m * nalgebra::Vector3::new(1.0, 0.0, 0.0);
        assert!((v - nalgebra::Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gimbal_lock_reconstructs_matrix() {
        for order in ORDERS {
            let m = matrix_from_euler(order, [30.0, 90.0, 20.0]);
            let back = matrix_from_euler(order, euler_from_matrix(order, &m));
            assert!((m - back).norm() < 1e-9, "{order:?}");
        }
    }

    proptest! {
        #[test]
        fn angles_round_trip(o in 0usize..6, a in -179.0f64..179.0, b in -89.0f64..89.0, c in -179.0f64..179.0) {
            let order = ORDERS[o];
            let m = matrix_from_euler(order, [a, b, c]);
            let [a2, b2, c2] = euler_from_matrix(order, &m);
            prop_assert!((a - a2).abs() < 1e-7 && (b - b2).abs() < 1e-7 && (c - c2).abs() < 1e-7,
                "{:?}: {:?} vs {:?}", order, [a, b, c], [a2, b2, c2]);
        }
    }
}
