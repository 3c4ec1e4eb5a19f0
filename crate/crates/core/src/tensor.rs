//! Dense H×W×C feature tensors and the kernels the trackers are built from.
//!
//! Storage is row-major over (height, width, channel): the channel index varies
//! fastest. All reductions accumulate in `f64` in a fixed row-major order so
//! results are bit-reproducible.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{shape_err, validation_err, Error, Result};

const TENSOR_MAGIC: &[u8; 4] = b"TTNS";
const TENSOR_VERSION: u32 = 1;

/// An H×W×C block of `f32` features.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

/// Number of elements in a tensor, the |E| of the change-rate average.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElementCount(usize);

impl ElementCount {
    pub fn get(self) -> usize {
        self.0
    }
}

/// A single-channel correlation response.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Location and value of a response maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub value: f32,
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("non-finite value at flat index {i}"))),
        None => Ok(()),
    }
}

impl TemplateTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return shape_err(format!("dimensions must be positive, got {height}x{width}x{channels}"));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return shape_err(format!(
                "data length {} does not match {height}x{width}x{channels} = {expected}",
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return validation_err(format!("non-finite value at flat index {i}"));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Builds a tensor from values the caller guarantees to be finite and sized.
    pub(crate) fn from_parts(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { height, width, channels, data }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn element_count(&self) -> ElementCount {
        ElementCount(self.data.len())
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(row, col, channel)]
    }

    /// Channel vector at one spatial position.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return shape_err(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            ));
        }
        Ok(())
    }

    /// Copies channels `[start, start + count)` into a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.channels {
            return shape_err(format!(
                "channel slice [{start}, {}) out of range for {} channels",
                start + count,
                self.channels
            ));
        }
        let mut data = Vec::with_capacity(self.height * self.width * count);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Ok(Self::from_parts(self.height, self.width, count, data))
    }

    /// Single channel as a row-major H×W plane.
    pub fn channel_plane(&self, channel: usize) -> Result<Vec<f32>> {
        if channel >= self.channels {
            return shape_err(format!("channel {channel} out of range for {} channels", self.channels));
        }
        Ok(self.data.iter().skip(channel).step_by(self.channels).copied().collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        for v in [TENSOR_VERSION, self.height as u32, self.width as u32, self.channels as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Format(format!("bad tensor magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != TENSOR_VERSION {
            return Err(Error::Format(format!("unsupported tensor version {version}")));
        }
        let (h, w, c) = (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize);
        let data = read_f32s(&mut r, h * w * c)?;
        Self::new(h, w, c, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

impl ResponseMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return shape_err(format!("response data length {} != {height}x{width}", data.len()));
        }
        check_finite(&data)?;
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Elementwise map producing a new response of the same shape.
    pub fn map_indexed(&self, f: impl Fn(usize, usize, f32) -> f32) -> Result<Self> {
        let data = (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c, self.get(r, c)))
            .collect();
        Self::new(self.height, self.width, data)
    }
}

/// Elementwise `a·x + b·y`.
pub fn combine(a: f32, x: &TemplateTensor, b: f32, y: &TemplateTensor) -> Result<TemplateTensor> {
    x.same_shape(y, "combine")?;
    let data: Vec<f32> = x.data.iter().zip(&y.data).map(|(&xv, &yv)| a * xv + b * yv).collect();
    check_finite(&data)?;
    Ok(TemplateTensor::from_parts(x.height, x.width, x.channels, data))
}

/// Euclidean norm of `x − y`.
pub fn l2_distance(x: &TemplateTensor, y: &TemplateTensor) -> Result<f64> {
    Ok(squared_distance(x, y)?.sqrt())
}

pub fn squared_distance(x: &TemplateTensor, y: &TemplateTensor) -> Result<f64> {
    x.same_shape(y, "l2_distance")?;
    Ok(x.data
        .iter()
        .zip(&y.data)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum())
}

/// Mean absolute elementwise difference (the template change rate δ).
pub fn mean_abs_diff(x: &TemplateTensor, y: &TemplateTensor) -> Result<f64> {
    x.same_shape(y, "mean_abs_diff")?;
    let total: f64 = x.data.iter().zip(&y.data).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
    Ok(total / x.data.len() as f64)
}

/// Valid-mode 2-D cross-correlation summed over channels.
pub fn cross_correlate(template: &TemplateTensor, search: &TemplateTensor) -> Result<ResponseMap> {
    if template.channels != search.channels {
        return shape_err(format!(
            "cross_correlate: template has {} channels, search has {}",
            template.channels, search.channels
        ));
    }
    if template.height > search.height || template.width > search.width {
        return shape_err(format!(
            "cross_correlate: template {}x{} larger than search {}x{}",
            template.height, template.width, search.height, search.width
        ));
    }
    let out_h = search.height - template.height + 1;
    let out_w = search.width - template.width + 1;
    let row_len = template.width * template.channels;
    let mut data = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        for c in 0..out_w {
            let mut acc = 0f64;
            for i in 0..template.height {
                let t_row = &template.data[i * row_len..(i + 1) * row_len];
                let s_start = search.index(r + i, c, 0);
                let s_row = &search.data[s_start..s_start + row_len];
                let dot: f32 = t_row.iter().zip(s_row).map(|(a, b)| a * b).sum();
                acc += dot as f64;
            }
            data.push(acc as f32);
        }
    }
    ResponseMap::new(out_h, out_w, data)
}

/// Location of the maximum response; ties go to the smallest row, then column.
pub fn argmax_response(map: &ResponseMap) -> Result<Peak> {
    if map.data.is_empty() {
        return validation_err("argmax of an empty response map");
    }
    let mut best = 0usize;
    for (i, &v) in map.data.iter().enumerate() {
        if v > map.data[best] {
            best = i;
        }
    }
    Ok(Peak { row: best / map.width, col: best % map.width, value: map.data[best] })
}

/// Stacks three equally shaped tensors along the channel axis, in argument order.
pub fn concat_channels(x: &TemplateTensor, y: &TemplateTensor, z: &TemplateTensor) -> Result<TemplateTensor> {
    x.same_shape(y, "concat_channels")?;
    x.same_shape(z, "concat_channels")?;
    let c = x.channels;
    let mut data = Vec::with_capacity(x.data.len() * 3);
    for ((a, b), d) in x.data.chunks_exact(c).zip(y.data.chunks_exact(c)).zip(z.data.chunks_exact(c)) {
        data.extend_from_slice(a);
        data.extend_from_slice(b);
        data.extend_from_slice(d);
    }
    Ok(TemplateTensor::from_parts(x.height, x.width, 3 * c, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> TemplateTensor {
        let data = (0..h * w * c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        TemplateTensor::new(h, w, c, data).unwrap()
    }

    fn t1(values: &[f32]) -> TemplateTensor {
        TemplateTensor::new(1, 1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn new_tensor_shapes() {
        let s = TemplateTensor::new(1, 1, 1, vec![0.5]).unwrap();
        assert_eq!(s.data(), &[0.5]);
        let z = TemplateTensor::zeros(6, 6, 256).unwrap();
        assert_eq!(z.element_count().get(), 9216);
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(matches!(TemplateTensor::new(2, 2, 1, vec![1.0, 2.0, 3.0]), Err(Error::Shape(_))));
        assert!(matches!(TemplateTensor::new(1, 1, 1, vec![f32::NAN]), Err(Error::Validation(_))));
    }

    #[test]
    fn combine_examples() {
        let x = t1(&[1.0, -2.0]);
        let y = t1(&[7.0, 3.0]);
        assert_eq!(combine(1.0, &x, 0.0, &y).unwrap(), x);
        let ones = TemplateTensor::filled(2, 2, 3, 1.0).unwrap();
        let zeros = TemplateTensor::zeros(2, 2, 3).unwrap();
        let out = combine(0.9898, &ones, 0.0102, &zeros).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.9898));
        assert_eq!(combine(0.5, &t1(&[2.0]), 0.5, &t1(&[4.0])).unwrap().data(), &[3.0]);
        assert!(matches!(combine(1.0, &x, 1.0, &t1(&[1.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn distance_examples() {
        let x = t1(&[3.0, 0.0]);
        let y = t1(&[0.0, 4.0]);
        assert_eq!(l2_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(l2_distance(&x, &y).unwrap(), 5.0);
        assert_eq!(mean_abs_diff(&t1(&[1.0, 1.0]), &t1(&[0.0, 2.0])).unwrap(), 1.0);
        assert_eq!(mean_abs_diff(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn distances_match_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = random_tensor(&mut rng, 6, 6, 8);
            let y = random_tensor(&mut rng, 6, 6, 8);
            let mut sq = 0.0f64;
            let mut abs = 0.0f64;
            for r in 0..6 {
                for c in 0..6 {
                    for ch in 0..8 {
                        let d = x.get(r, c, ch) as f64 - y.get(r, c, ch) as f64;
                        sq += d * d;
                        abs += d.abs();
                    }
                }
            }
            let l2 = l2_distance(&x, &y).unwrap();
            assert!((l2 - sq.sqrt()).abs() <= 1e-5 * sq.sqrt());
            assert!((mean_abs_diff(&x, &y).unwrap() - abs / 288.0).abs() < 1e-6);
        }
    }

    fn naive_correlation(t: &TemplateTensor, s: &TemplateTensor) -> Vec<f64> {
        let oh = s.height() - t.height() + 1;
        let ow = s.width() - t.width() + 1;
        let mut out = vec![0.0; oh * ow];
        for r in 0..oh {
            for c in 0..ow {
                for i in 0..t.height() {
                    for j in 0..t.width() {
                        for ch in 0..t.channels() {
                            out[r * ow + c] += t.get(i, j, ch) as f64 * s.get(r + i, c + j, ch) as f64;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn correlation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let search = random_tensor(&mut rng, 3, 3, 1);
        let zero = TemplateTensor::zeros(2, 2, 1).unwrap();
        assert!(cross_correlate(&zero, &search).unwrap().data().iter().all(|&v| v == 0.0));
        let two = TemplateTensor::new(1, 1, 1, vec![2.0]).unwrap();
        let resp = cross_correlate(&two, &search).unwrap();
        assert_eq!((resp.height(), resp.width()), (3, 3));
        for (r, s) in resp.data().iter().zip(search.data()) {
            assert_eq!(*r, 2.0 * s);
        }
        for _ in 0..10 {
            let t = random_tensor(&mut rng, 3, 3, 2);
            let s = random_tensor(&mut rng, 7, 7, 2);
            let resp = cross_correlate(&t, &s).unwrap();
            assert_eq!((resp.height(), resp.width()), (5, 5));
            for (a, b) in resp.data().iter().zip(naive_correlation(&t, &s)) {
                assert!((*a as f64 - b).abs() <= 1e-4 * b.abs().max(1.0));
            }
        }
        let big = TemplateTensor::zeros(4, 4, 1).unwrap();
        assert!(matches!(cross_correlate(&big, &search), Err(Error::Shape(_))));
        let wrong_c = TemplateTensor::zeros(1, 1, 2).unwrap();
        assert!(matches!(cross_correlate(&wrong_c, &search), Err(Error::Shape(_))));
    }

    #[test]
    fn argmax_examples() {
        let m = ResponseMap::new(2, 2, vec![1.0, 2.0, 3.0, 0.0]).unwrap();
        assert_eq!(argmax_response(&m).unwrap(), Peak { row: 1, col: 0, value: 3.0 });
        let u = ResponseMap::new(3, 3, vec![0.25; 9]).unwrap();
        assert_eq!(argmax_response(&u).unwrap(), Peak { row: 0, col: 0, value: 0.25 });
        let e = ResponseMap::new(0, 0, vec![]).unwrap();
        assert!(matches!(argmax_response(&e), Err(Error::Validation(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let data: Vec<f32> = (0..35).map(|_| rng.random_range(0..5) as f32).collect();
            let m = ResponseMap::new(5, 7, data.clone()).unwrap();
            let peak = argmax_response(&m).unwrap();
            let max = data.iter().cloned().fold(f32::MIN, f32::max);
            let first = data.iter().position(|&v| v == max).unwrap();
            assert_eq!((peak.row, peak.col, peak.value), (first / 7, first % 7, max));
        }
    }

    #[test]
    fn concat_examples() {
        let a = TemplateTensor::zeros(6, 6, 256).unwrap();
        assert_eq!(concat_channels(&a, &a, &a).unwrap().shape(), (6, 6, 768));
        let out = concat_channels(&t1(&[1.0]), &t1(&[2.0]), &t1(&[3.0])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
        let narrow = TemplateTensor::zeros(6, 5, 256).unwrap();
        assert!(matches!(concat_channels(&a, &narrow, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn tensor_file_layout() {
        let t = TemplateTensor::new(1, 2, 1, vec![1.0, -0.5]).unwrap();
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        let mut expected = b"TTNS".to_vec();
        for v in [1u32, 1, 2, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-0.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(TemplateTensor::read_from(&bytes[..]).unwrap(), t);
        bytes[0] = b'X';
        assert!(matches!(TemplateTensor::read_from(&bytes[..]), Err(Error::Format(_))));
    }

    fn arb_tensor_pair() -> impl Strategy<Value = (TemplateTensor, TemplateTensor)> {
        (1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(h, w, c)| {
            let n = h * w * c;
            (
                proptest::collection::vec(-10.0f32..10.0, n),
                proptest::collection::vec(-10.0f32..10.0, n),
            )
                .prop_map(move |(a, b)| {
                    (TemplateTensor::new(h, w, c, a).unwrap(), TemplateTensor::new(h, w, c, b).unwrap())
                })
        })
    }

    proptest! {
        #[test]
        fn combine_is_bilinear((x, y) in arb_tensor_pair(), a in -2.0f32..2.0, b in -2.0f32..2.0,
                               c in -2.0f32..2.0, d in -2.0f32..2.0) {
            let lhs1 = combine(a, &x, b, &y).unwrap();
            let lhs2 = combine(c, &x, d, &y).unwrap();
            let rhs = combine(a + c, &x, b + d, &y).unwrap();
            for ((p, q), r) in lhs1.data().iter().zip(lhs2.data()).zip(rhs.data()) {
                prop_assert!((p + q - r).abs() <= 1e-5 * (1.0 + r.abs()) * 10.0);
            }
        }

        #[test]
        fn l2_is_a_metric((x, y) in arb_tensor_pair(), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w, c) = x.shape();
            let z = random_tensor(&mut rng, h, w, c);
            let xy = l2_distance(&x, &y).unwrap();
            prop_assert_eq!(xy, l2_distance(&y, &x).unwrap());
            prop_assert!(xy <= l2_distance(&x, &z).unwrap() + l2_distance(&z, &y).unwrap() + 1e-9);
        }

        #[test]
        fn correlation_is_linear_in_template(seed in 0u64..500, alpha in -2.0f32..2.0, beta in -2.0f32..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t1 = random_tensor(&mut rng, 3, 3, 2);
            let t2 = random_tensor(&mut rng, 3, 3, 2);
            let s = random_tensor(&mut rng, 6, 7, 2);
            let lhs = cross_correlate(&combine(alpha, &t1, beta, &t2).unwrap(), &s).unwrap();
            let r1 = cross_correlate(&t1, &s).unwrap();
            let r2 = cross_correlate(&t2, &s).unwrap();
            for ((l, a), b) in lhs.data().iter().zip(r1.data()).zip(r2.data()) {
                let rhs = alpha * a + beta * b;
                prop_assert!((l - rhs).abs() <= 1e-4 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn argmax_is_shift_equivariant(seed in 0u64..500, dy in 0usize..3, dx in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(&mut rng, 2, 2, 2);
            // A strong copy of the template planted in weak noise.
            let (sh, sw) = (9usize, 9usize);
            let mut base = vec![0f32; sh * sw * 2];
            for v in base.iter_mut() {
                *v = rng.random_range(-0.05f32..0.05);
            }
            let plant = |data: &mut Vec<f32>, r0: usize, c0: usize| {
                for i in 0..2 {
                    for j in 0..2 {
                        for ch in 0..2 {
                            data[((r0 + i) * sw + c0 + j) * 2 + ch] = 4.0 * t.get(i, j, ch);
                        }
                    }
                }
            };
            let mut a = vec![0f32; sh * sw * 2];
            let mut b = vec![0f32; sh * sw * 2];
            // Shift the background too so the whole search content translates.
            for r in 0..sh {
                for c in 0..sw {
                    for ch in 0..2 {
                        a[(r * sw + c) * 2 + ch] = base[(r * sw + c) * 2 + ch];
                        if r >= dy && c >= dx {
                            b[(r * sw + c) * 2 + ch] = base[((r - dy) * sw + c - dx) * 2 + ch];
                        }
                    }
                }
            }
            plant(&mut a, 2, 2);
            plant(&mut b, 2 + dy, 2 + dx);
            base.clear();
            let pa = argmax_response(&cross_correlate(&t, &TemplateTensor::new(sh, sw, 2, a).unwrap()).unwrap()).unwrap();
            let pb = argmax_response(&cross_correlate(&t, &TemplateTensor::new(sh, sw, 2, b).unwrap()).unwrap()).unwrap();
            prop_assert_eq!((pa.row + dy, pa.col + dx), (pb.row, pb.col));
        }

        #[test]
        fn concat_then_slice_recovers_inputs((x, y) in arb_tensor_pair()) {
            let z = combine(0.5, &x, -1.0, &y).unwrap();
            let cat = concat_channels(&x, &y, &z).unwrap();
            let c = x.channels();
            prop_assert_eq!(cat.slice_channels(0, c).unwrap(), x);
            prop_assert_eq!(cat.slice_channels(c, c).unwrap(), y);
            prop_assert_eq!(cat.slice_channels(2 * c, c).unwrap(), z);
        }
    }
}
