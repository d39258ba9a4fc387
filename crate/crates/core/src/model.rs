//! A fitted ratio model of any method, and its JSON document.
//!
//! Every document carries a `method` tag. ppDRE models are stored as
//! `{"method": "ppdre", "d": .., "K": .., "projections": [{"a", "gamma",
//! "beta", "floor"}]}`; floats are written in shortest round-trip form, so a
//! reloaded model evaluates to the same bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{KernelRatioModel, LogisticRatioModel, KLIEP_MIN};
use crate::basis::GaussianBasis;
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;
use crate::pp::{PPRatioModel, Projection};

#[derive(Debug, Clone, PartialEq)]
pub enum RatioModel {
    Ppdre(PPRatioModel),
    Ulsif(KernelRatioModel),
    Kliep(KernelRatioModel),
    Logistic(LogisticRatioModel),
}

impl RatioModel {
    pub fn method(&self) -> &'static str {
        match self {
            RatioModel::Ppdre(_) => "ppdre",
            RatioModel::Ulsif(_) => "ulsif",
            RatioModel::Kliep(_) => "kliep",
            RatioModel::Logistic(_) => "logistic",
        }
    }

    pub fn d(&self) -> usize {
        match self {
            RatioModel::Ppdre(m) => m.d,
            RatioModel::Ulsif(m) | RatioModel::Kliep(m) => m.d(),
            RatioModel::Logistic(m) => m.d(),
        }
    }

    /// Size summary: `K` for ppDRE, the center count for kernel models and
    /// the input dimension for the classifier.
    pub fn size(&self) -> usize {
        match self {
            RatioModel::Ppdre(m) => m.k(),
            RatioModel::Ulsif(m) | RatioModel::Kliep(m) => m.centers.rows(),
            RatioModel::Logistic(m) => m.d(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::dims(self.d(), x.len()));
        }
        Ok(self.evaluate_unchecked(x))
    }

    fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            RatioModel::Ppdre(m) => m.evaluate_unchecked(x),
            RatioModel::Ulsif(m) | RatioModel::Kliep(m) => m.evaluate_unchecked(x),
            RatioModel::Logistic(m) => m.evaluate_unchecked(x),
        }
    }

    pub fn evaluate_rows(&self, xs: &DenseMatrix) -> Result<Vec<f64>> {
        if xs.cols() != self.d() {
            return Err(Error::dims(self.d(), xs.cols()));
        }
        Ok(crate::par::map_chunks(xs.rows(), |r| {
            r.map(|i| self.evaluate_unchecked(xs.row(i))).collect::<Vec<_>>()
        })
        .concat())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Document::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionDoc {
    a: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    floor: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    d: usize,
    sigma: f64,
    centers: Vec<Vec<f64>>,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
enum Document {
    Ppdre {
        d: usize,
        #[serde(rename = "K")]
        k: usize,
        projections: Vec<ProjectionDoc>,
    },
    Ulsif(KernelDoc),
    Kliep(KernelDoc),
    Logistic {
        d: usize,
        w: Vec<f64>,
        b: f64,
        prior: f64,
    },
}

fn kernel_doc(m: &KernelRatioModel) -> KernelDoc {
    KernelDoc {
        d: m.d(),
        sigma: m.sigma,
        centers: m.centers.row_iter().map(<[f64]>::to_vec).collect(),
        theta: m.theta.clone(),
    }
}

impl From<&RatioModel> for Document {
    fn from(m: &RatioModel) -> Self {
        match m {
            RatioModel::Ppdre(pp) => Document::Ppdre {
                d: pp.d,
                k: pp.k(),
                projections: pp
                    .projections
                    .iter()
                    .map(|p| ProjectionDoc {
                        a: p.a.clone(),
                        gamma: p.basis.centers().to_vec(),
                        beta: p.beta.clone(),
                        floor: p.floor,
                    })
                    .collect(),
            },
            RatioModel::Ulsif(k) => Document::Ulsif(kernel_doc(k)),
            RatioModel::Kliep(k) => Document::Kliep(kernel_doc(k)),
            RatioModel::Logistic(l) => Document::Logistic {
                d: l.d(),
                w: l.w.clone(),
                b: l.b,
                prior: l.prior,
            },
        }
    }
}

fn finite(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite value in `{name}`")))
    }
}

fn kernel_model(doc: KernelDoc, min_value: f64) -> Result<KernelRatioModel> {
    if !(doc.sigma > 0.0) || !doc.sigma.is_finite() {
        return Err(Error::invalid("kernel bandwidth must be positive"));
    }
    if doc.centers.len() != doc.theta.len() {
        return Err(Error::dims(doc.centers.len(), doc.theta.len()));
    }
    finite("theta", &doc.theta)?;
    let centers = if doc.centers.is_empty() {
        DenseMatrix::zeros(0, doc.d)
    } else {
        DenseMatrix::from_rows(&doc.centers)?
    };
    if centers.cols() != doc.d {
        return Err(Error::dims(doc.d, centers.cols()));
    }
    Ok(KernelRatioModel {
        centers,
        sigma: doc.sigma,
        theta: doc.theta,
        min_value,
    })
}

impl TryFrom<Document> for RatioModel {
    type Error = Error;

    fn try_from(doc: Document) -> Result<Self> {
        match doc {
            Document::Ppdre { d, k, projections } => {
                if k != projections.len() {
                    return Err(Error::invalid(format!(
                        "K = {k} but {} projections listed",
                        projections.len()
                    )));
                }
                let mut model = PPRatioModel::constant(d);
                for p in projections {
                    if p.gamma.is_empty() || p.gamma.len() != p.beta.len() {
                        return Err(Error::invalid("gamma and beta must be non-empty and of equal length"));
                    }
                    finite("a", &p.a)?;
                    finite("gamma", &p.gamma)?;
                    finite("beta", &p.beta)?;
                    if !(p.floor > 0.0) || !p.floor.is_finite() {
                        return Err(Error::invalid("projection floor must be positive"));
                    }
                    model.push(Projection {
                        a: p.a,
                        basis: GaussianBasis::new(p.gamma),
                        beta: p.beta,
                        floor: p.floor,
                    })?;
                }
                Ok(RatioModel::Ppdre(model))
            }
            Document::Ulsif(k) => Ok(RatioModel::Ulsif(kernel_model(k, 0.0)?)),
            Document::Kliep(k) => Ok(RatioModel::Kliep(kernel_model(k, KLIEP_MIN)?)),
            Document::Logistic { d, w, b, prior } => {
                if w.len() != d {
                    return Err(Error::dims(d, w.len()));
                }
                finite("w", &w)?;
                if !b.is_finite() || !(prior > 0.0) || !prior.is_finite() {
                    return Err(Error::invalid("intercept and prior must be finite, prior positive"));
                }
                Ok(RatioModel::Logistic(LogisticRatioModel { w, b, prior }))
            }
        }
    }
}
