use ndarray::Array2;

/// Sinusoidal encoding: `PE[pos, 2i] = sin(pos / 10000^(2i/dim))` and
/// `PE[pos, 2i+1] = cos(pos / 10000^(2i/dim))`.
pub fn positional_encoding(length: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((length, dim), |(pos, c)| {
        let pair = (c - c % 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(pair / dim as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
