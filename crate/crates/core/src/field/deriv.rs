use super::Field;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Applies the forward difference `order` times along `axis`.
///
/// The output shrinks by `order` samples along that axis; no border values
/// are invented.
pub fn spatial_derivative(field: &Field, axis: Axis, order: usize) -> Result<Field> {
    let extent = match axis {
        Axis::X => field.width,
        Axis::Y => field.height,
    };
    if extent < order + 1 {
        return invalid(format!(
            "derivative of order {order} needs at least {} samples along {axis:?}, got {extent}",
            order + 1
        ));
    }
    let mut cur = field.clone();
    for _ in 0..order {
        cur = forward_difference(&cur, axis);
    }
    Ok(cur)
}

fn forward_difference(f: &Field, axis: Axis) -> Field {
    match axis {
        Axis::X => Field::from_fn(f.height, f.width - 1, f.channels, |y, x, c| {
            f.get(y, x + 1, c) - f.get(y, x, c)
        }),
        Axis::Y => Field::from_fn(f.height - 1, f.width, f.channels, |y, x, c| {
            f.get(y + 1, x, c) - f.get(y, x, c)
        }),
    }
}
