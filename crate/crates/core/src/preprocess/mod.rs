//! Skewness removal, imputation, standardisation and one-hot encoding.

mod matrix;
mod missing;
mod pipeline;
mod skew;
mod standardize;

pub use matrix::{
    peptide_column, protein_column, FeatureMatrix, MergeOptions, VISIT_MONTH_COLUMN,
};
pub use missing::{
    classify_missingness, mean_impute, point_biserial, soft_impute, ImputeConfig, Missingness,
    SoftImputeResult, MCAR_MAX_CORRELATION,
};
pub use pipeline::{
    one_hot_medication, ColumnState, FittedPreprocessor, PreprocessConfig, MEDICATION_COLUMNS,
    PREPROCESSOR_VERSION,
};
pub use skew::{
    boxcox, boxcox_mle, select_transform, skewness, skewness_std_error, TransformKind, TransformSpec, BOXCOX_PARSIMONY,
    SHIFT_EPS,
};
pub use standardize::{fit_standardizer, standardize, standardize_value};
