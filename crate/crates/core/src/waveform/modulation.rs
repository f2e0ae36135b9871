use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Square Gray-coded QAM, unit average power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
    #[serde(rename = "64qam")]
    Qam64,
    #[serde(rename = "256qam")]
    Qam256,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
            Modulation::Qam256 => 8,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    /// Levels per axis.
    fn side(self) -> usize {
        1 << (self.bits_per_symbol() / 2)
    }

    fn scale(self) -> f64 {
        (2.0 * (self.order() as f64 - 1.0) / 3.0).sqrt().recip()
    }

    /// Maps `bits_per_symbol` bits, MSB first, I then Q.
    pub fn map(self, bits: &[u8]) -> Complex64 {
        let h = self.bits_per_symbol() / 2;
        let axis = |b: &[u8]| {
            let gray = b.iter().fold(0usize, |acc, &x| (acc << 1) | x as usize);
            let mut pos = gray;
            let mut shift = gray >> 1;
            while shift != 0 {
                pos ^= shift;
                shift >>= 1;
            }
            (2 * pos) as f64 - (self.side() - 1) as f64
        };
        Complex64::new(axis(&bits[..h]), axis(&bits[h..2 * h])) * self.scale()
    }

    /// Nearest constellation point's bits, appended to `out`.
    pub fn demap(self, z: Complex64, out: &mut Vec<u8>) {
        let h = self.bits_per_symbol() / 2;
        let side = self.side() as f64;
        let axis = |v: f64, out: &mut Vec<u8>| {
            let pos = ((v / self.scale() + side - 1.0) / 2.0).round().clamp(0.0, side - 1.0) as usize;
            let gray = pos ^ (pos >> 1);
            for i in (0..h).rev() {
                out.push(((gray >> i) & 1) as u8);
            }
        };
        axis(z.re, out);
        axis(z.im, out);
    }

    /// Nearest constellation point.
    pub fn slice(self, z: Complex64) -> Complex64 {
        let mut b = Vec::with_capacity(self.bits_per_symbol());
        self.demap(z, &mut b);
        self.map(&b)
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qpsk" => Some(Modulation::Qpsk),
            "16qam" => Some(Modulation::Qam16),
            "64qam" => Some(Modulation::Qam64),
            "256qam" => Some(Modulation::Qam256),
            _ => None,
        }
    }
}
