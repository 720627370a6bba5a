//! Trainable parameters of the additive scorer and their file format.
//!
//! Weights file (`.becrw`), little-endian:
//!
//! ```text
//! 8 bytes  magic "BECRWTS\0"
//! u32      version (1)
//! u8       lexical schema code (bit 0 title, bit 1 pair-BM25)
//! u32      number of blocks
//! blocks:  name (u16 length + UTF-8), u8 rank, rank x u32 dims, f64 values
//! u16      number of other-feature names, then each name (u16 + UTF-8)
//! ```
//!
//! Blocks: `kernel.mu` [K], `kernel.sigma` [K], `alpha` [K, L'], `beta` [F],
//! `gamma.cls` [p], `gamma.others` [J], `bias` [3] (deep, lexical, others).

use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_preamble, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::kernel::KernelBank;
use crate::lexical::LexicalSchema;

const MAGIC: &[u8; 8] = b"BECRWTS\0";
const VERSION: u32 = 1;

pub const DEFAULT_KERNELS: usize = 11;

/// The three additive score components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Deep,
    Lexical,
    Others,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Deep, Component::Lexical, Component::Others];

    pub fn name(self) -> &'static str {
        match self {
            Component::Deep => "deep",
            Component::Lexical => "lexical",
            Component::Others => "others",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "deep" => Ok(Component::Deep),
            "lexical" | "lexi" => Ok(Component::Lexical),
            "others" => Ok(Component::Others),
            other => Err(Error::Config(format!("unknown component `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub kernels: KernelBank,
    /// Stored layer count L'.
    pub layers: usize,
    /// Deep weights, row-major `[k * layers + l]`, shared by all query terms.
    pub alpha: Vec<f64>,
    pub schema: LexicalSchema,
    pub beta: Vec<f64>,
    /// Projection of the document [CLS] vector.
    pub gamma_cls: Vec<f64>,
    pub other_names: Vec<String>,
    pub gamma_others: Vec<f64>,
    /// Per-component biases: deep, lexical, others.
    pub bias: [f64; 3],
}

impl ModelWeights {
    /// Zero linear weights over the evenly spaced kernel bank.
    pub fn init(kernels: usize, layers: usize, dim: usize, schema: LexicalSchema, other_names: Vec<String>) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("at least one layer required".into()));
        }
        let kernels = KernelBank::evenly_spaced(kernels)?;
        Ok(Self {
            alpha: vec![0.0; kernels.len() * layers],
            kernels,
            layers,
            beta: vec![0.0; schema.len()],
            schema,
            gamma_cls: vec![0.0; dim],
            gamma_others: vec![0.0; other_names.len()],
            other_names,
            bias: [0.0; 3],
        })
    }

    pub fn kernel_count(&self) -> usize {
        self.kernels.len()
    }

    pub fn dim(&self) -> usize {
        self.gamma_cls.len()
    }

    #[inline]
    pub fn alpha(&self, k: usize, l: usize) -> f64 {
        self.alpha[k * self.layers + l]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.kernels.len();
        if self.kernels.sigma.len() != k {
            return Err(Error::Schema("kernel means and widths differ in length".into()));
        }
        if self.alpha.len() != k * self.layers {
            return Err(Error::Schema(format!("alpha has {} entries, expected {}x{}", self.alpha.len(), k, self.layers)));
        }
        if self.beta.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "beta has {} entries but schema `{}` has {} features",
                self.beta.len(),
                self.schema.name(),
                self.schema.len()
            )));
        }
        if self.gamma_others.len() != self.other_names.len() {
            return Err(Error::Schema("gamma.others and other-feature names differ in length".into()));
        }
        Ok(())
    }

    /// Zeroes every weight of `component`, including its bias.
    pub fn zero_component(&mut self, component: Component) {
        match component {
            Component::Deep => self.alpha.iter_mut().for_each(|a| *a = 0.0),
            Component::Lexical => self.beta.iter_mut().for_each(|b| *b = 0.0),
            Component::Others => {
                self.gamma_cls.iter_mut().for_each(|g| *g = 0.0);
                self.gamma_others.iter_mut().for_each(|g| *g = 0.0);
            }
        }
        self.bias[component as usize] = 0.0;
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::of(self)
    }

    /// Parameters flattened in [`ParamLayout`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().len());
        v.extend(&self.kernels.mu);
        v.extend(&self.kernels.sigma);
        v.extend(&self.alpha);
        v.extend(&self.beta);
        v.extend(&self.gamma_cls);
        v.extend(&self.gamma_others);
        v.extend(self.bias);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let layout = self.layout();
        if flat.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), actual: flat.len() });
        }
        self.kernels.mu.copy_from_slice(&flat[layout.mu.clone()]);
        self.kernels.sigma.copy_from_slice(&flat[layout.sigma.clone()]);
        self.alpha.copy_from_slice(&flat[layout.alpha.clone()]);
        self.beta.copy_from_slice(&flat[layout.beta.clone()]);
        self.gamma_cls.copy_from_slice(&flat[layout.gamma_cls.clone()]);
        self.gamma_others.copy_from_slice(&flat[layout.gamma_others.clone()]);
        self.bias.copy_from_slice(&flat[layout.bias.clone()]);
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let k = self.kernels.len() as u32;
        let blocks: [(&str, Vec<u32>, &[f64]); 7] = [
            ("kernel.mu", vec![k], &self.kernels.mu),
            ("kernel.sigma", vec![k], &self.kernels.sigma),
            ("alpha", vec![k, self.layers as u32], &self.alpha),
            ("beta", vec![self.beta.len() as u32], &self.beta),
            ("gamma.cls", vec![self.gamma_cls.len() as u32], &self.gamma_cls),
            ("gamma.others", vec![self.gamma_others.len() as u32], &self.gamma_others),
            ("bias", vec![3], &self.bias),
        ];
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u8(self.schema.code());
        w.u32(blocks.len() as u32);
        for (name, dims, values) in blocks {
            w.str16(name)?;
            w.u8(dims.len() as u8);
            for d in dims {
                w.u32(d);
            }
            for v in values {
                w.f64(*v);
            }
        }
        w.u16(self.other_names.len() as u16);
        for n in &self.other_names {
            w.str16(n)?;
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf, "weights file");
        read_preamble(&mut r, MAGIC, VERSION)?;
        let schema = LexicalSchema::from_code(r.u8()?)?;
        let mut blocks: Vec<(String, Vec<u32>, Vec<f64>)> = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.str16()?;
            let rank = r.u8()?;
            let dims: Vec<u32> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
            let n = dims.iter().map(|&d| d as usize).product();
            let values = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
            blocks.push((name, dims, values));
        }
        let other_names = (0..r.u16()?).map(|_| r.str16()).collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        let mut take = |name: &str| -> Result<(Vec<u32>, Vec<f64>)> {
            let i = blocks
                .iter()
                .position(|b| b.0 == name)
                .ok_or_else(|| Error::format("weights file", format!("missing block `{name}`")))?;
            let (_, dims, values) = blocks.swap_remove(i);
            Ok((dims, values))
        };
        let (_, mu) = take("kernel.mu")?;
        let (_, sigma) = take("kernel.sigma")?;
        let (alpha_dims, alpha) = take("alpha")?;
        let (_, beta) = take("beta")?;
        let (_, gamma_cls) = take("gamma.cls")?;
        let (_, gamma_others) = take("gamma.others")?;
        let (_, bias) = take("bias")?;
        if alpha_dims.len() != 2 || bias.len() != 3 {
            return Err(Error::format("weights file", "bad alpha or bias shape"));
        }
        let weights = Self {
            kernels: KernelBank::new(mu, sigma)?,
            layers: alpha_dims[1] as usize,
            alpha,
            schema,
            beta,
            gamma_cls,
            other_names,
            gamma_others,
            bias: [bias[0], bias[1], bias[2]],
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Index ranges of each parameter block in the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub mu: Range<usize>,
    pub sigma: Range<usize>,
    pub alpha: Range<usize>,
    pub beta: Range<usize>,
    pub gamma_cls: Range<usize>,
    pub gamma_others: Range<usize>,
    pub bias: Range<usize>,
}

impl ParamLayout {
    fn of(w: &ModelWeights) -> Self {
        let mut at = 0;
        let mut next = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let k = w.kernels.len();
        Self {
            mu: next(k),
            sigma: next(k),
            alpha: next(w.alpha.len()),
            beta: next(w.beta.len()),
            gamma_cls: next(w.gamma_cls.len()),
            gamma_others: next(w.gamma_others.len()),
            bias: next(3),
        }
    }

    pub fn len(&self) -> usize {
        self.bias.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> [(&'static str, Range<usize>); 7] {
        [
            ("mu", self.mu.clone()),
            ("sigma", self.sigma.clone()),
            ("alpha", self.alpha.clone()),
            ("beta", self.beta.clone()),
            ("gamma.cls", self.gamma_cls.clone()),
            ("gamma.others", self.gamma_others.clone()),
            ("bias", self.bias.clone()),
        ]
    }

    /// Ranges owned by `component` (kernels count as deep).
    pub fn component(&self, component: Component) -> Vec<Range<usize>> {
        match component {
            Component::Deep => vec![self.mu.clone(), self.sigma.clone(), self.alpha.clone(), self.bias.start..self.bias.start + 1],
            Component::Lexical => vec![self.beta.clone(), self.bias.start + 1..self.bias.start + 2],
            Component::Others => vec![
                self.gamma_cls.clone(),
                self.gamma_others.clone(),
                self.bias.start + 2..self.bias.end,
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ModelWeights {
        let mut w = ModelWeights::init(11, 5, 4, LexicalSchema::full(), vec!["pagerank".into()]).unwrap();
        for (i, a) in w.alpha.iter_mut().enumerate() {
            *a = i as f64 * 0.01 - 0.2;
        }
        w.beta[3] = 0.7;
        w.gamma_cls = vec![0.1, -0.2, 0.3, -0.4];
        w.gamma_others[0] = 0.044;
        w.bias = [0.5, -0.5, 1.5];
        w
    }

    #[test]
    fn init_shapes() {
        let w = sample();
        w.validate().unwrap();
        assert_eq!(w.kernel_count(), 11);
        assert_eq!(w.alpha.len(), 55);
        assert_eq!(w.beta.len(), 24);
        assert_eq!(w.layout().len(), 11 + 11 + 55 + 24 + 4 + 1 + 3);
    }

    #[test]
    fn file_round_trip() {
        let w = sample();
        assert_eq!(ModelWeights::from_bytes(&w.to_bytes().unwrap()).unwrap(), w);
        let mut bad = w.to_bytes().unwrap();
        bad.truncate(bad.len() - 3);
        assert!(ModelWeights::from_bytes(&bad).is_err());
    }

    #[test]
    fn zeroing_components() {
        let mut w = sample();
        w.zero_component(Component::Deep);
        assert!(w.alpha.iter().all(|&a| a == 0.0));
        assert_eq!(w.bias[0], 0.0);
        w.zero_component(Component::Others);
        assert!(w.gamma_cls.iter().chain(&w.gamma_others).all(|&g| g == 0.0));
        assert_eq!(w.beta[3], 0.7);
    }

    #[test]
    fn schema_mismatch_detected() {
        let mut w = sample();
        w.beta.pop();
        assert!(matches!(w.validate(), Err(Error::Schema(_))));
    }

    proptest! {
        #[test]
        fn flat_round_trip(values in proptest::collection::vec(-3.0f64..3.0, 109)) {
            let mut w = sample();
            let mut flat = values.clone();
            // widths must stay above the clamp to survive KernelBank::new on reload
            for s in &mut flat[11..22] {
                *s = s.abs() + 0.01;
            }
            w.set_flat(&flat).unwrap();
            prop_assert_eq!(w.to_flat(), flat);
            prop_assert_eq!(ModelWeights::from_bytes(&w.to_bytes().unwrap()).unwrap(), w);
        }
    }
}
