//! `LCBS` token streams.
//!
//! ```text
//! offset size field
//!  0     4    magic "LCBS"
//!  4     4    version (u32 LE, = 1)
//!  8     4    sample_rate (u32 LE)
//! 12     4    hop (u32 LE)
//! 16     2    n_total (u16 LE)
//! 18     2    n_parallel (u16 LE)
//! 20     4    codebook_size (u32 LE)
//! 24     4    frame_count (u32 LE)
//! 28     ...  tokens, ceil(log2 codebook_size) bits each, MSB first,
//!             frame-major then stage; last byte zero-padded
//! ```

use crate::error::{bail, Result};
use crate::quantizer::Tokens;

pub const STREAM_MAGIC: &[u8; 4] = b"LCBS";
pub const STREAM_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub sample_rate: u32,
    pub hop: u32,
    pub n_total: u16,
    pub n_parallel: u16,
    pub codebook_size: u32,
    pub frame_count: u32,
}

impl StreamHeader {
    pub fn validate(&self) -> Result<()> {
        if self.codebook_size < 2 {
            bail!(Format, "codebook size must be at least 2, got {}", self.codebook_size);
        }
        if self.n_total == 0 || self.n_parallel == 0 || self.n_parallel > self.n_total {
            bail!(
                Format,
                "invalid stage layout: {} total, {} parallel",
                self.n_total,
                self.n_parallel
            );
        }
        if self.sample_rate == 0 || self.hop == 0 {
            bail!(Format, "sample rate and hop must be positive");
        }
        Ok(())
    }

    /// Bits used to store one token.
    pub fn bits_per_token(&self) -> u32 {
        bits_for(self.codebook_size)
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn payload_len(&self) -> usize {
        let bits = self.frame_count as u64 * self.n_total as u64 * self.bits_per_token() as u64;
        bits.div_ceil(8) as usize
    }
}

/// `ceil(log2 k)` for `k ≥ 2`.
pub fn bits_for(k: u32) -> u32 {
    u32::BITS - (k.max(2) - 1).leading_zeros()
}

/// Token bit rate implied by a header, before any entropy coding.
pub fn bandwidth_bps(h: &StreamHeader) -> f64 {
    h.frame_rate() * h.n_total as f64 * h.bits_per_token() as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub header: StreamHeader,
    pub tokens: Tokens,
}

impl TokenStream {
    pub fn new(header: StreamHeader, tokens: Tokens) -> Result<Self> {
        let ts = Self { header, tokens };
        ts.validate()?;
        Ok(ts)
    }

    fn validate(&self) -> Result<()> {
        self.header.validate()?;
        let h = &self.header;
        if self.tokens.frames() != h.frame_count as usize || self.tokens.stages() != h.n_total as usize {
            bail!(
                Shape,
                "tokens are {}×{}, header says {}×{}",
                self.tokens.frames(),
                self.tokens.stages(),
                h.frame_count,
                h.n_total
            );
        }
        if let Some(t) = self.tokens.as_array().iter().find(|&&t| t >= h.codebook_size) {
            bail!(Data, "token {t} out of range for codebook size {}", h.codebook_size);
        }
        Ok(())
    }
}

pub fn pack(ts: &TokenStream) -> Result<Vec<u8>> {
    ts.validate()?;
    let h = &ts.header;
    let mut out = Vec::with_capacity(HEADER_LEN + h.payload_len());
    out.extend_from_slice(STREAM_MAGIC);
    out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
    out.extend_from_slice(&h.sample_rate.to_le_bytes());
    out.extend_from_slice(&h.hop.to_le_bytes());
    out.extend_from_slice(&h.n_total.to_le_bytes());
    out.extend_from_slice(&h.n_parallel.to_le_bytes());
    out.extend_from_slice(&h.codebook_size.to_le_bytes());
    out.extend_from_slice(&h.frame_count.to_le_bytes());

    let bits = h.bits_per_token();
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for &t in ts.tokens.as_array().iter() {
        acc = (acc << bits) | t as u64;
        filled += bits;
        while filled >= 8 {
            filled -= 8;
            out.push((acc >> filled) as u8);
        }
        acc &= (1u64 << filled) - 1;
    }
    if filled > 0 {
        out.push((acc << (8 - filled)) as u8);
    }
    debug_assert_eq!(out.len(), HEADER_LEN + h.payload_len());
    Ok(out)
}

pub fn unpack(bytes: &[u8]) -> Result<TokenStream> {
    if bytes.len() < 8 || &bytes[..4] != STREAM_MAGIC {
        bail!(Format, "not an LCBS token stream");
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let version = u32_at(4);
    if version != STREAM_VERSION {
        bail!(Format, "unsupported LCBS version {version}");
    }
    if bytes.len() < HEADER_LEN {
        bail!(Data, "truncated LCBS header");
    }
    let header = StreamHeader {
        sample_rate: u32_at(8),
        hop: u32_at(12),
        n_total: u16_at(16),
        n_parallel: u16_at(18),
        codebook_size: u32_at(20),
        frame_count: u32_at(24),
    };
    header.validate()?;
    let payload = &bytes[HEADER_LEN..];
    let need = header.payload_len();
    if payload.len() < need {
        bail!(Data, "payload has {} bytes, expected {need}", payload.len());
    }
    if payload.len() > need {
        bail!(Format, "{} trailing bytes after payload", payload.len() - need);
    }

    let bits = header.bits_per_token();
    let count = header.frame_count as usize * header.n_total as usize;
    let mask = (1u64 << bits) - 1;
    let mut data = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut avail = 0u32;
    let mut src = payload.iter();
    for _ in 0..count {
        while avail < bits {
            acc = (acc << 8) | *src.next().expect("length checked") as u64;
            avail += 8;
        }
        avail -= bits;
        data.push(((acc >> avail) & mask) as u32);
        acc &= (1u64 << avail) - 1;
    }
    if acc != 0 {
        bail!(Format, "nonzero padding bits at end of payload");
    }
    let tokens = Tokens::from_rows(header.frame_count as usize, header.n_total as usize, data)?;
    TokenStream::new(header, tokens)
}
