//! Probability rasters and binary lesion masks.
//!
//! Rasters on disk use the plain-text PGM layout (`P2`, width, height,
//! maxval, then `width * height` integer samples); a sample `v` stands for the
//! probability `v / maxval`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::task::TaskId;

/// Inclusive binarization threshold for segmentation probabilities.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RasterError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("raster has {got} samples, expected {expected} ({width}x{height})")]
    Length {
        width: u32,
        height: u32,
        expected: usize,
        got: usize,
    },
    #[error("mask sample {value} at index {index} is not 0 or 1")]
    NotBinary { index: usize, value: u8 },
}

/// Per-pixel lesion probabilities, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRaster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ProbRaster {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(RasterError::Length {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn binarize(&self, lesion: TaskId) -> LesionMask {
        LesionMask {
            lesion,
            width: self.width,
            height: self.height,
            bitmap: self
                .data
                .iter()
                .map(|&p| u8::from(p >= BINARIZE_THRESHOLD))
                .collect(),
        }
    }

    /// Parses a plain PGM (`P2`) document.
    pub fn parse_pgm(text: &str) -> Result<Self, RasterError> {
        let mut tokens = text.lines().enumerate().flat_map(|(i, line)| {
            let content = line.split('#').next().unwrap_or("");
            content.split_whitespace().map(move |t| (i + 1, t))
        });
        let mut next = |what: &str| {
            tokens.next().ok_or_else(|| RasterError::Parse {
                line: text.lines().count().max(1),
                msg: format!("unexpected end of input, expected {what}"),
            })
        };
        let (line, magic) = next("magic")?;
        if magic != "P2" {
            return Err(RasterError::Parse {
                line,
                msg: format!("expected magic P2, found '{magic}'"),
            });
        }
        let parse_u32 = |(line, tok): (usize, &str), what: &str| {
            tok.parse::<u32>().map_err(|_| RasterError::Parse {
                line,
                msg: format!("invalid {what} '{tok}'"),
            })
        };
        let width = parse_u32(next("width")?, "width")?;
        let height = parse_u32(next("height")?, "height")?;
        let max_tok = next("maxval")?;
        let maxval = parse_u32(max_tok, "maxval")?;
        if maxval == 0 {
            return Err(RasterError::Parse {
                line: max_tok.0,
                msg: "maxval must be positive".into(),
            });
        }
        let expected = width as usize * height as usize;
        let mut data = Vec::with_capacity(expected);
        for _ in 0..expected {
            let tok = next("sample")?;
            let v = parse_u32(tok, "sample")?;
            if v > maxval {
                return Err(RasterError::Parse {
                    line: tok.0,
                    msg: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            data.push(f64::from(v) / f64::from(maxval));
        }
        if let Some((line, tok)) = tokens.next() {
            return Err(RasterError::Parse {
                line,
                msg: format!("trailing data '{tok}' after {expected} samples"),
            });
        }
        Self::new(width, height, data)
    }
}

/// Binary lesion raster, row-major, one byte per pixel holding 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LesionMask {
    pub lesion: TaskId,
    pub width: u32,
    pub height: u32,
    pub bitmap: Vec<u8>,
}

impl LesionMask {
    pub fn new(lesion: TaskId, width: u32, height: u32, bitmap: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize;
        if bitmap.len() != expected {
            return Err(RasterError::Length {
                width,
                height,
                expected,
                got: bitmap.len(),
            });
        }
        if let Some((index, &value)) = bitmap.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(RasterError::NotBinary { index, value });
        }
        Ok(Self {
            lesion,
            width,
            height,
            bitmap,
        })
    }

    pub fn zeros(lesion: TaskId, width: u32, height: u32) -> Self {
        Self {
            lesion,
            width,
            height,
            bitmap: vec![0; width as usize * height as usize],
        }
    }

    pub fn pixel_count(&self) -> u64 {
        self.bitmap.iter().map(|&b| u64::from(b)).sum()
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n1\n", self.width, self.height);
        for row in self.bitmap.chunks(self.width.max(1) as usize) {
            let line: Vec<&str> = row.iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_pgm_with_comments() {
        let r = ProbRaster::parse_pgm("P2\n# lesion map\n2 2\n100\n0 50\n# row two\n49 100\n").unwrap();
        assert_eq!((r.width, r.height), (2, 2));
        assert_eq!(r.data, vec![0.0, 0.5, 0.49, 1.0]);
        let m = r.binarize(TaskId::Ex);
        assert_eq!(m.bitmap, vec![0, 1, 0, 1]);
    }

    #[test]
    fn parse_errors_name_line() {
        let err = ProbRaster::parse_pgm("P2\n2 2\n100\n0 50\n1 x\n").unwrap_err();
        assert_eq!(
            err,
            RasterError::Parse {
                line: 5,
                msg: "invalid sample 'x'".into()
            }
        );
        assert!(matches!(
            ProbRaster::parse_pgm("P5\n1 1\n1\n0"),
            Err(RasterError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ProbRaster::parse_pgm("P2\n2 1\n9\n10 0"),
            Err(RasterError::Parse { line: 4, .. })
        ));
        assert!(ProbRaster::parse_pgm("P2\n2 1\n9\n1").is_err());
        assert!(ProbRaster::parse_pgm("P2\n1 1\n9\n1 1").is_err());
    }

    #[test]
    fn mask_pgm_roundtrip() {
        let m = LesionMask::new(TaskId::Ma, 3, 2, vec![1, 0, 0, 0, 1, 1]).unwrap();
        let back = ProbRaster::parse_pgm(&m.to_pgm()).unwrap().binarize(TaskId::Ma);
        assert_eq!(back, m);
    }

    #[test]
    fn mask_rejects_non_binary_and_bad_length() {
        assert!(matches!(
            LesionMask::new(TaskId::Ex, 2, 1, vec![0, 2]),
            Err(RasterError::NotBinary { index: 1, value: 2 })
        ));
        assert!(matches!(
            LesionMask::new(TaskId::Ex, 2, 2, vec![0, 1]),
            Err(RasterError::Length { .. })
        ));
    }
}
