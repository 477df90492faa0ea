pub mod compare;
pub mod fit;
pub mod profiles;
pub mod simulate;

use areal_sir::model::{catalog_names, describe};
use areal_sir::catalog;

/// One line per catalog preset: name, data model and terms.
pub fn models_list() -> String {
    catalog_names()
        .into_iter()
        .map(|n| describe(&catalog(n).expect("catalog names resolve")) + "\n")
        .collect()
}
