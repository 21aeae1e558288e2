//! Two-line text tensor format.
//!
//! Line one holds the comma-separated shape, line two the comma-separated
//! values in row-major order:
//!
//! ```text
//! 2,2
//! 1,0,0,1
//! ```
//!
//! Values are written in the shortest form that parses back to the same
//! number, so a write/read cycle is bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn tensor_to_text<T: Scalar, W: Write>(tensor: ArrayViewD<T>, mut sink: W) -> Result<()> {
    if tensor.ndim() == 0 {
        return Err(Error::invalid("tensor must have at least one dimension"));
    }
    write_joined(&mut sink, tensor.shape().iter())?;
    sink.write_all(b"\n")?;
    write_joined(&mut sink, tensor.iter())?;
    sink.flush()?;
    Ok(())
}

fn write_joined<W: Write, D: std::fmt::Display>(
    sink: &mut W,
    items: impl Iterator<Item = D>,
) -> std::io::Result<()> {
    let mut buf = String::new();
    for (i, v) in items.enumerate() {
        if i > 0 {
            buf.push(',');
        }
        use std::fmt::Write as _;
        write!(buf, "{v}").expect("writing to a String");
        if buf.len() > 1 << 16 {
            sink.write_all(buf.as_bytes())?;
            buf.clear();
        }
    }
    sink.write_all(buf.as_bytes())
}

pub fn tensor_to_string<T: Scalar>(tensor: ArrayViewD<T>) -> Result<String> {
    let mut out = Vec::new();
    tensor_to_text(tensor, &mut out)?;
    Ok(String::from_utf8(out).expect("ascii output"))
}

pub fn text_to_tensor<T: Scalar>(source: &str) -> Result<ArrayD<T>> {
    let mut lines = source.split('\n');
    let shape_line = lines.next().unwrap_or("").trim_end_matches('\r');
    let data_line = lines.next().map(|l| l.trim_end_matches('\r'));
    if let Some((i, extra)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(i + 3, 1, format!("unexpected content {extra:?}")));
    }

    if shape_line.trim().is_empty() {
        return Err(parse_err(1, 1, "empty shape"));
    }
    let shape = tokens(shape_line)
        .map(|(col, tok)| {
            tok.parse::<usize>()
                .map_err(|_| parse_err(1, col, format!("bad dimension {tok:?}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let expected: usize = shape.iter().product();

    let data_line = data_line.unwrap_or("");
    let values = if data_line.trim().is_empty() {
        Vec::new()
    } else {
        tokens(data_line)
            .map(|(col, tok)| {
                tok.parse::<T>()
                    .map_err(|_| parse_err(2, col, format!("non-numeric value {tok:?}")))
            })
            .collect::<Result<Vec<T>>>()?
    };
    if values.len() != expected {
        return Err(parse_err(
            2,
            data_line.len() + 1,
            format!("{} values, {expected} expected for shape {shape:?}", values.len()),
        ));
    }
    Ok(ArrayD::from_shape_vec(IxDyn(&shape), values).expect("count checked"))
}

/// Comma-separated tokens with their 1-based starting column.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut col = 1;
    line.split(',').map(move |tok| {
        let start = col;
        col += tok.len() + 1;
        (start + (tok.len() - tok.trim_start().len()), tok.trim())
    })
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn read_tensor<T: Scalar, R: Read>(mut source: R) -> Result<ArrayD<T>> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    text_to_tensor(&text)
}

pub fn load_tensor<T: Scalar>(path: &Path) -> Result<ArrayD<T>> {
    read_tensor(fs::File::open(path)?)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_tensor<T: Scalar>(tensor: ArrayViewD<T>, path: &Path) -> Result<()> {
    let text = tensor_to_string(tensor)?;
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn golden() {
        let t: Array2<f32> = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(tensor_to_string(t.view().into_dyn()).unwrap(), "2,2\n1,0,0,1");
        let back: ArrayD<f32> = text_to_tensor("2,2\n1,0,0,1").unwrap();
        assert_eq!(back, t.into_dyn());
    }

    #[test]
    fn trailing_newline_accepted() {
        let t: ArrayD<f64> = text_to_tensor("3\n0.5,-1,2\n").unwrap();
        assert_eq!(t.as_slice().unwrap(), &[0.5, -1.0, 2.0]);
        let t: ArrayD<f64> = text_to_tensor("1,2\r\n4, 5\r\n").unwrap();
        assert_eq!(t.shape(), &[1, 2]);
    }

    #[test]
    fn count_mismatch() {
        let err = text_to_tensor::<f32>("2,2\n1,0,0").unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("3 values, 4 expected"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_tokens_located() {
        match text_to_tensor::<f32>("2,2\n1,x,0,1").unwrap_err() {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        match text_to_tensor::<f32>("2,a\n1").unwrap_err() {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (1, 3)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(text_to_tensor::<f32>("\n1").is_err());
        assert!(text_to_tensor::<f32>("1\n1\n2").is_err());
    }

    #[test]
    fn rank_zero_rejected() {
        let t = ArrayD::<f32>::zeros(IxDyn(&[]));
        assert!(tensor_to_string(t.view()).is_err());
    }

    #[test]
    fn special_values_round_trip() {
        let t = ndarray::arr1(&[f32::INFINITY, -0.0, f32::MIN_POSITIVE, 1e-40, f32::MAX]).into_dyn();
        let back: ArrayD<f32> = text_to_tensor(&tensor_to_string(t.view()).unwrap()).unwrap();
        for (a, b) in t.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/t.txt");
        let t = ndarray::Array3::from_shape_fn([2, 3, 4], |(a, b, c)| (a * 12 + b * 4 + c) as f64 / 7.0).into_dyn();
        save_tensor(t.view(), &path).unwrap();
        assert_eq!(load_tensor::<f64>(&path).unwrap(), t);
        assert!(!path.with_extension("txt.tmp").exists());
    }

    proptest! {
        #[test]
        fn round_trip_f64(shape in proptest::collection::vec(1usize..4, 1..5), seed in any::<u64>()) {
            let n: usize = shape.iter().product();
            let mut s = seed;
            let vals: Vec<f64> = (0..n).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(s >> 2) // finite, varied magnitudes
            }).collect();
            let t = ArrayD::from_shape_vec(IxDyn(&shape), vals).unwrap();
            let back: ArrayD<f64> = text_to_tensor(&tensor_to_string(t.view()).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            for (a, b) in t.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
