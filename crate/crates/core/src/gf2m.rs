//! Arithmetic in GF(2^r) for r <= 3, used to build commuting Pauli
//! partitions for multi-qubit bases.
//!
//! Elements are bit-packed polynomials over GF(2) in the basis
//! {1, w, w^2}. The field trace maps GF(2^r) onto GF(2).

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gf2m {
    degree: u32,
    modulus: u32,
}

impl Gf2m {
    /// Field with 2^degree elements, `1 <= degree <= 3`.
    pub fn new(degree: u32) -> Option<Self> {
        let modulus = match degree {
            1 => 0b10,   // x
            2 => 0b111,  // x^2 + x + 1
            3 => 0b1011, // x^3 + x + 1
            _ => return None,
        };
        Some(Self { degree, modulus })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn order(&self) -> u32 {
        1 << self.degree
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        a ^ b
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        let mut acc = 0u32;
        let mut a = a;
        let mut b = b;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & self.order() != 0 {
                a ^= self.modulus;
            }
        }
        acc
    }

    /// tr(a) = a + a^2 + ... + a^(2^(r-1)), always 0 or 1.
    pub fn trace(&self, a: u32) -> u32 {
        let mut t = 0;
        let mut power = a;
        for _ in 0..self.degree {
            t ^= power;
            power = self.mul(power, power);
        }
        debug_assert!(t <= 1);
        t
    }

    /// Bits v_j = tr(z w^j), the coordinates dual to the polynomial basis
    /// under the trace form.
    pub fn dual_coordinates(&self, z: u32) -> u32 {
        (0..self.degree).fold(0, |acc, j| acc | (self.trace(self.mul(z, 1 << j)) << j))
    }
}
