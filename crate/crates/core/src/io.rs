//! CFF1 field files.
//!
//! Layout: one ASCII header line
//! `CFF1 n=<n> kind=<scalar|oneform|symtensor2> dims=<m1,...,mn> L=<L1,...,Ln>\n`
//! followed by raw little-endian IEEE-754 float64 payload, component-major,
//! each component in lexicographic grid order (last axis fastest).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    OneForm,
    SymTensor2,
}

impl FieldKind {
    fn as_str(&self) -> &'static str {
        match self {
            FieldKind::Scalar => "scalar",
            FieldKind::OneForm => "oneform",
            FieldKind::SymTensor2 => "symtensor2",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(FieldKind::Scalar),
            "oneform" => Ok(FieldKind::OneForm),
            "symtensor2" => Ok(FieldKind::SymTensor2),
            other => Err(Error::MalformedHeader(format!("unknown kind `{other}`"))),
        }
    }

    fn component_count(&self, spec: &GridSpec) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::OneForm => spec.n(),
            FieldKind::SymTensor2 => spec.sym_len(),
        }
    }
}

/// A loaded field of any kind.
#[derive(Debug, Clone)]
pub enum AnyField {
    Scalar(ScalarField),
    OneForm(OneForm),
    SymTensor2(SymTensor2),
}

impl AnyField {
    pub fn kind(&self) -> FieldKind {
        match self {
            AnyField::Scalar(_) => FieldKind::Scalar,
            AnyField::OneForm(_) => FieldKind::OneForm,
            AnyField::SymTensor2(_) => FieldKind::SymTensor2,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        match self {
            AnyField::Scalar(f) => f.spec(),
            AnyField::OneForm(f) => f.spec(),
            AnyField::SymTensor2(f) => f.spec(),
        }
    }
}

fn header(kind: FieldKind, spec: &GridSpec) -> String {
    let dims = spec
        .dims()
        .iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let lens = spec
        .lengths()
        .iter()
        .map(|l| format!("{l}"))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "CFF1 n={} kind={} dims={} L={}\n",
        spec.n(),
        kind.as_str(),
        dims,
        lens
    )
}

fn write_payload<W: Write>(w: &mut W, comps: &[&ScalarField]) -> Result<()> {
    for c in comps {
        for v in c.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_scalar(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header(FieldKind::Scalar, f.spec()).as_bytes())?;
    write_payload(&mut w, &[f])?;
    w.flush()?;
    Ok(())
}

pub fn save_oneform(path: impl AsRef<Path>, f: &OneForm) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header(FieldKind::OneForm, f.spec()).as_bytes())?;
    let comps: Vec<&ScalarField> = f.components().iter().collect();
    write_payload(&mut w, &comps)?;
    w.flush()?;
    Ok(())
}

pub fn save_symtensor2(path: impl AsRef<Path>, f: &SymTensor2) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header(FieldKind::SymTensor2, f.spec()).as_bytes())?;
    let comps: Vec<&ScalarField> = f.components().iter().collect();
    write_payload(&mut w, &comps)?;
    w.flush()?;
    Ok(())
}

pub fn save_field(path: impl AsRef<Path>, f: &AnyField) -> Result<()> {
    match f {
        AnyField::Scalar(f) => save_scalar(path, f),
        AnyField::OneForm(f) => save_oneform(path, f),
        AnyField::SymTensor2(f) => save_symtensor2(path, f),
    }
}

fn parse_header(line: &str) -> Result<(FieldKind, GridSpec)> {
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some("CFF1") => {}
        _ => return Err(Error::MalformedHeader("missing CFF1 magic".into())),
    }
    let mut n: Option<usize> = None;
    let mut kind: Option<FieldKind> = None;
    let mut dims: Option<Vec<usize>> = None;
    let mut lens: Option<Vec<f64>> = None;
    for tok in parts {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::MalformedHeader(format!("bad token `{tok}`")))?;
        match key {
            "n" => {
                n = Some(val.parse().map_err(|_| {
                    Error::MalformedHeader(format!("bad dimension `{val}`"))
                })?)
            }
            "kind" => kind = Some(FieldKind::parse(val)?),
            "dims" => {
                let v: std::result::Result<Vec<usize>, _> =
                    val.split(',').map(|s| s.parse()).collect();
                dims = Some(v.map_err(|_| Error::MalformedHeader(format!("bad dims `{val}`")))?);
            }
            "L" => {
                let v: std::result::Result<Vec<f64>, _> =
                    val.split(',').map(|s| s.parse()).collect();
                lens =
                    Some(v.map_err(|_| Error::MalformedHeader(format!("bad lengths `{val}`")))?);
            }
            other => return Err(Error::MalformedHeader(format!("unknown key `{other}`"))),
        }
    }
    let (n, kind, dims, lens) = match (n, kind, dims, lens) {
        (Some(n), Some(k), Some(d), Some(l)) => (n, k, d, l),
        _ => return Err(Error::MalformedHeader("missing header fields".into())),
    };
    if dims.len() != n || lens.len() != n {
        return Err(Error::MalformedHeader(format!(
            "n={} does not match dims/L arity {}/{}",
            n,
            dims.len(),
            lens.len()
        )));
    }
    let spec = GridSpec::new(dims, lens).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok((kind, spec))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<AnyField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        let k = r.read(&mut byte)?;
        if k == 0 {
            return Err(Error::MalformedHeader("missing newline".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        if line.len() > 4096 {
            return Err(Error::MalformedHeader("header too long".into()));
        }
        line.push(byte[0]);
    }
    let line = String::from_utf8(line).map_err(|_| Error::MalformedHeader("non-ASCII header".into()))?;
    let (kind, spec) = parse_header(&line)?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = kind.component_count(&spec) * spec.num_points();
    if payload.len() % 8 != 0 || payload.len() / 8 != expected {
        return Err(Error::PayloadSizeMismatch {
            expected,
            found: payload.len() / 8,
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinitePayload);
    }

    let p = spec.num_points();
    let comp = |c: usize| ScalarField::from_data(&spec, values[c * p..(c + 1) * p].to_vec());
    Ok(match kind {
        FieldKind::Scalar => AnyField::Scalar(comp(0)),
        FieldKind::OneForm => {
            AnyField::OneForm(OneForm::from_components((0..spec.n()).map(comp).collect()))
        }
        FieldKind::SymTensor2 => AnyField::SymTensor2(SymTensor2::from_components(
            &spec,
            (0..spec.sym_len()).map(comp).collect(),
        )),
    })
}

pub fn load_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    match load_field(path)? {
        AnyField::Scalar(f) => Ok(f),
        other => Err(Error::MalformedHeader(format!(
            "expected scalar field, found {}",
            other.kind().as_str()
        ))),
    }
}

pub fn load_oneform(path: impl AsRef<Path>) -> Result<OneForm> {
    match load_field(path)? {
        AnyField::OneForm(f) => Ok(f),
        other => Err(Error::MalformedHeader(format!(
            "expected oneform field, found {}",
            other.kind().as_str()
        ))),
    }
}

pub fn load_symtensor2(path: impl AsRef<Path>) -> Result<SymTensor2> {
    match load_field(path)? {
        AnyField::SymTensor2(f) => Ok(f),
        other => Err(Error::MalformedHeader(format!(
            "expected symtensor2 field, found {}",
            other.kind().as_str()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn spec() -> GridSpec {
        GridSpec::cube(3, 8, 2.0 * std::f64::consts::PI).unwrap()
    }

    #[test]
    fn scalar_round_trip_is_bitwise() {
        let f = ScalarField::from_fn(&spec(), |x| (x[0].sin() * 1.0e-7 + x[1]).exp());
        let dir = tempdir();
        let path = dir.join("f.cff");
        save_scalar(&path, &f).unwrap();
        let g = load_scalar(&path).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn symtensor_round_trip_and_header() {
        let mut t = SymTensor2::zeros(&spec());
        *t.comp_mut(2, 0) = ScalarField::from_fn(&spec(), |x| x[0] - x[2]);
        let dir = tempdir();
        let path = dir.join("t.cff");
        save_symtensor2(&path, &t).unwrap();
        let text = std::fs::read(&path).unwrap();
        let nl = text.iter().position(|&b| b == b'\n').unwrap();
        let head = std::str::from_utf8(&text[..nl]).unwrap();
        assert!(head.contains("kind=symtensor2"));
        assert!(head.contains("n=3"));
        // 6 components for n=3
        assert_eq!(text.len() - nl - 1, 6 * 8 * 8 * 8 * 8);
        let u = load_symtensor2(&path).unwrap();
        assert_eq!(t, u);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let dir = tempdir();
        let path = dir.join("bad.cff");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"CFF1 n=3 kind=scalar dims=8,8,8 L=1,1,1\n").unwrap();
        f.write_all(&[0u8; 16]).unwrap();
        drop(f);
        match load_field(&path) {
            Err(Error::PayloadSizeMismatch { expected, found }) => {
                assert_eq!(expected, 512);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let dir = tempdir();
        let path = dir.join("nan.cff");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"CFF1 n=3 kind=scalar dims=8,8,8 L=1,1,1\n").unwrap();
        let mut payload = vec![0u8; 512 * 8];
        payload[..8].copy_from_slice(&f64::NAN.to_le_bytes());
        f.write_all(&payload).unwrap();
        drop(f);
        assert!(matches!(load_field(&path), Err(Error::NonFinitePayload)));
    }

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "cff-test-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
