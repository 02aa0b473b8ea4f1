use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{FactorizedGaussianModel, LatentModel, LogisticModel, QuadraticModel};
use crate::error::{Error, Result};
use crate::linalg::from_rows;

/// Builds one model family from its TOML table.
pub trait ModelBuilder: Send + Sync {
    /// Value of the `kind` key this builder answers to.
    fn kind(&self) -> &'static str;
    fn build(&self, table: &toml::Table) -> Result<Arc<dyn LatentModel>>;
}

/// Model families selectable by `kind`.
pub struct ModelRegistry {
    builders: BTreeMap<&'static str, Box<dyn ModelBuilder>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self { builders: BTreeMap::new() };
        r.register(Box::new(QuadraticBuilder));
        r.register(Box::new(FactorizedBuilder));
        r.register(Box::new(LogisticBuilder));
        r
    }
}

impl ModelRegistry {
    pub fn register(&mut self, builder: Box<dyn ModelBuilder>) {
        self.builders.insert(builder.kind(), builder);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn build(&self, table: &toml::Table) -> Result<Arc<dyn LatentModel>> {
        let kind = table
            .get("kind")
            .and_then(toml::Value::as_str)
            .ok_or_else(|| Error::Config("model table needs a string `kind`".into()))?;
        let builder = self.builders.get(kind).ok_or_else(|| {
            Error::Config(format!(
                "unknown model kind `{kind}` (known: {})",
                self.kinds().collect::<Vec<_>>().join(", ")
            ))
        })?;
        builder.build(table)
    }

    pub fn build_str(&self, toml_src: &str) -> Result<Arc<dyn LatentModel>> {
        let table: toml::Table =
            toml::from_str(toml_src).map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
        self.build(&table)
    }
}

fn parse<T: DeserializeOwned>(table: &toml::Table) -> Result<T> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e| Error::Config(format!("invalid model definition: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticSpec {
    #[allow(dead_code)]
    kind: String,
    d_theta: usize,
    hessian: Vec<Vec<f64>>,
    linear: Vec<f64>,
    #[serde(default)]
    constant: f64,
    #[serde(default)]
    shift_to_origin: bool,
}

struct QuadraticBuilder;

impl ModelBuilder for QuadraticBuilder {
    fn kind(&self) -> &'static str {
        "quadratic"
    }

    fn build(&self, table: &toml::Table) -> Result<Arc<dyn LatentModel>> {
        let s: QuadraticSpec = parse(table)?;
        let mut m = QuadraticModel::new(
            s.d_theta,
            from_rows(&s.hessian)?,
            DVector::from_vec(s.linear),
            s.constant,
        )?;
        if s.shift_to_origin {
            m = m.shift_to_origin()?;
        }
        Ok(Arc::new(m))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorizedSpec {
    #[allow(dead_code)]
    kind: String,
    d_theta: usize,
    block_hessian: Vec<Vec<f64>>,
    obs_map: Vec<Vec<f64>>,
    #[serde(default)]
    obs_precision: Option<Vec<Vec<f64>>>,
    observations: Vec<f64>,
    #[serde(default)]
    datapoints: Option<usize>,
}

struct FactorizedBuilder;

impl ModelBuilder for FactorizedBuilder {
    fn kind(&self) -> &'static str {
        "factorized_gaussian"
    }

    fn build(&self, table: &toml::Table) -> Result<Arc<dyn LatentModel>> {
        let s: FactorizedSpec = parse(table)?;
        let obs_map = from_rows(&s.obs_map)?;
        let k = obs_map.ncols();
        let precision = match s.obs_precision {
            Some(rows) => from_rows(&rows)?,
            None => DMatrix::zeros(k, k),
        };
        let m = FactorizedGaussianModel::new(s.d_theta, from_rows(&s.block_hessian)?, obs_map, precision, s.observations)?;
        Ok(match s.datapoints {
            Some(n) => Arc::new(m.truncated(n)?),
            None => Arc::new(m),
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticSpec {
    #[allow(dead_code)]
    kind: String,
    design: Vec<Vec<f64>>,
    labels: Vec<f64>,
    prior_precision_theta: f64,
    prior_precision_x: f64,
}

struct LogisticBuilder;

impl ModelBuilder for LogisticBuilder {
    fn kind(&self) -> &'static str {
        "logistic"
    }

    fn build(&self, table: &toml::Table) -> Result<Arc<dyn LatentModel>> {
        let s: LogisticSpec = parse(table)?;
        Ok(Arc::new(LogisticModel::new(
            from_rows(&s.design)?,
            s.labels,
            s.prior_precision_theta,
            s.prior_precision_x,
        )?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_each_kind() {
        let reg = ModelRegistry::default();
        let q = reg
            .build_str(
                r#"
kind = "quadratic"
d_theta = 1
hessian = [[-1.0, 1.0], [1.0, -2.0]]
linear = [0.0, 1.0]
constant = -0.5
"#,
            )
            .unwrap();
        assert_eq!(q.kind(), "quadratic");
        assert_eq!(q.log_lik_unchecked(&[1.0], &[1.0]), 0.0);

        let f = reg
            .build_str(
                r#"
kind = "factorized_gaussian"
d_theta = 1
block_hessian = [[-1.0, 1.0], [1.0, -2.0]]
obs_map = [[0.0], [1.0]]
obs_precision = [[1.0]]
observations = [0.5, 1.5, -0.2]
datapoints = 2
"#,
            )
            .unwrap();
        assert_eq!(f.dim_x(), 2);

        let l = reg
            .build_str(
                r#"
kind = "logistic"
design = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
labels = [1, 0, 1]
prior_precision_theta = 1.0
prior_precision_x = 1.0
"#,
            )
            .unwrap();
        assert_eq!((l.dim_theta(), l.dim_x()), (1, 2));
    }

    #[test]
    fn shift_flag_centers_the_model() {
        let reg = ModelRegistry::default();
        let q = reg
            .build_str(
                r#"
kind = "quadratic"
d_theta = 1
hessian = [[-1.0, 1.0], [1.0, -2.0]]
linear = [0.0, 1.0]
shift_to_origin = true
"#,
            )
            .unwrap();
        assert_eq!(q.maximizer().unwrap(), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn unknown_kind_and_bad_fields_are_config_errors() {
        let reg = ModelRegistry::default();
        assert!(matches!(reg.build_str("kind = \"nope\""), Err(Error::Config(_))));
        assert!(matches!(
            reg.build_str("kind = \"quadratic\"\nd_theta = 1\nhessian = [[1.0]]\nlinear = [0.0]\nbogus = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(reg.build_str("d_theta = 1"), Err(Error::Config(_))));
    }
}
