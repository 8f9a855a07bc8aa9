//! Linear soft-margin SVM trained in the dual, one-vs-one multiclass voting,
//! and a logistic-regression baseline behind a shared classifier interface.

mod binary;
mod logreg;
mod multiclass;

pub use binary::{kkt_violation, train_binary_svm, BinarySvm, SvmParams, TrainMeta};
pub use logreg::{LogRegParams, LogisticRegression};
pub use multiclass::{class_pairs, train_multiclass, PairModel, Prediction, SvmEnsemble, SVM_MAGIC};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Multiclass learner selectable by name.
pub trait Classifier: Send + Sync {
    fn name(&self) -> &str;

    fn fit(&self, x: &Matrix, y: &[usize], classes: usize) -> Result<Box<dyn TrainedClassifier>>;
}

pub trait TrainedClassifier: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<usize>;

    fn predict_rows(&self, x: &Matrix) -> Result<Vec<usize>> {
        (0..x.rows()).map(|r| self.predict(x.row(r))).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SvmClassifier {
    pub params: SvmParams,
}

impl Classifier for SvmClassifier {
    fn name(&self) -> &str {
        "svm"
    }

    fn fit(&self, x: &Matrix, y: &[usize], classes: usize) -> Result<Box<dyn TrainedClassifier>> {
        let ensemble = train_multiclass(x, y, &self.params)?;
        if ensemble.classes != classes {
            return Err(Error::Invalid(format!(
                "expected {classes} classes, training labels span {}",
                ensemble.classes
            )));
        }
        Ok(Box::new(ensemble))
    }
}

impl TrainedClassifier for SvmEnsemble {
    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(SvmEnsemble::predict(self, x)?.label)
    }
}

#[derive(Clone, Debug, Default)]
pub struct LogRegClassifier {
    pub params: LogRegParams,
}

impl Classifier for LogRegClassifier {
    fn name(&self) -> &str {
        "logreg"
    }

    fn fit(&self, x: &Matrix, y: &[usize], classes: usize) -> Result<Box<dyn TrainedClassifier>> {
        Ok(Box::new(LogisticRegression::fit(x, y, classes, &self.params)?))
    }
}

impl TrainedClassifier for LogisticRegression {
    fn predict(&self, x: &[f64]) -> Result<usize> {
        LogisticRegression::predict(self, x)
    }
}

type ClassifierFactory = Box<dyn Fn(&SvmParams) -> Box<dyn Classifier> + Send + Sync>;

/// Classifiers by name. Factories receive the configured SVM parameters.
pub struct ClassifierRegistry {
    factories: BTreeMap<String, ClassifierFactory>,
}

impl Default for ClassifierRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("svm", |p| Box::new(SvmClassifier { params: *p }));
        r.register("logreg", |_| Box::new(LogRegClassifier::default()));
        r
    }
}

impl ClassifierRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&SvmParams) -> Box<dyn Classifier> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, params: &SvmParams) -> Result<Box<dyn Classifier>> {
        let f = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "classifier",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        Ok(f(params))
    }
}
