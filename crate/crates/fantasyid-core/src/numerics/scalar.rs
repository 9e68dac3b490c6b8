use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type for tensors.
///
/// Everything numeric in the workspace is generic over this trait so the
/// same code path runs at 32-bit (training, sampling) and 64-bit
/// (finite-difference gradient checks). Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used when materializing constants and
    /// random draws (randomness is always sampled at 64-bit so that the
    /// f32 and f64 paths consume identical streams).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any scalar")
    }

    /// Widening conversion for accumulation and reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Tag recorded in checkpoints so a file is never reinterpreted at
    /// the wrong width.
    fn type_name() -> &'static str;

    fn byte_width() -> usize;

    /// Appends the little-endian bit pattern.
    fn put_le(self, out: &mut Vec<u8>);

    /// Reads one value from the first `byte_width()` bytes.
    fn get_le(src: &[u8]) -> Self;
}

impl Scalar for f32 {
    fn type_name() -> &'static str {
        "f32"
    }
    fn byte_width() -> usize {
        4
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(src: &[u8]) -> Self {
        f32::from_le_bytes(src[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    fn type_name() -> &'static str {
        "f64"
    }
    fn byte_width() -> usize {
        8
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(src: &[u8]) -> Self {
        f64::from_le_bytes(src[..8].try_into().expect("8 bytes"))
    }
}
