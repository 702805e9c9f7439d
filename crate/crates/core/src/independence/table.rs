//! Dense probability tables and the conditional-independence gap.

/// Sum a row-major table of `shape` onto `axes` (in the given order).
pub(crate) fn marginalize(table: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut out = vec![0.0; out_shape.iter().product()];
    let mut index = vec![0usize; shape.len()];
    for &p in table {
        let mut slot = 0;
        for &a in axes {
            slot = slot * shape[a] + index[a];
        }
        out[slot] += p;
        // advance the odometer, last axis fastest
        for pos in (0..shape.len()).rev() {
            index[pos] += 1;
            if index[pos] < shape[pos] {
                break;
            }
            index[pos] = 0;
        }
    }
    out
}

/// Largest `|p(x | y, z) - p(x | y)|` over outcomes with `p(y, z) > 0`.
///
/// `x`, `y`, `z` are disjoint axis sets; `y` may be empty.
pub(crate) fn ci_gap(table: &[f64], shape: &[usize], x: &[usize], y: &[usize], z: &[usize]) -> f64 {
    let axes: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
    let joint = marginalize(table, shape, &axes);
    let nx: usize = x.iter().map(|&a| shape[a]).product();
    let ny: usize = y.iter().map(|&a| shape[a]).product();
    let nz: usize = z.iter().map(|&a| shape[a]).product();
    let at = |ix: usize, iy: usize, iz: usize| joint[(ix * ny + iy) * nz + iz];

    let mut p_y = vec![0.0; ny];
    let mut p_xy = vec![0.0; nx * ny];
    let mut p_yz = vec![0.0; ny * nz];
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let v = at(ix, iy, iz);
                p_y[iy] += v;
                p_xy[ix * ny + iy] += v;
                p_yz[iy * nz + iz] += v;
            }
        }
    }

    let mut gap = 0.0f64;
    for iy in 0..ny {
        for iz in 0..nz {
            let pyz = p_yz[iy * nz + iz];
            if pyz <= 0.0 {
                continue;
            }
            for ix in 0..nx {
                let cond_full = at(ix, iy, iz) / pyz;
                let cond_y = p_xy[ix * ny + iy] / p_y[iy];
                gap = gap.max((cond_full - cond_y).abs());
            }
        }
    }
    gap
}
