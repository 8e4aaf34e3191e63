pub mod error;
pub mod fixtures;
pub mod grassmann;
pub mod ifs;
pub mod linalg;
pub mod measure;
pub mod symbolic;
pub mod tangency;

pub use error::{Error, Result};

// The guide's snippets run as doc-tests so they track the API.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/symbolic.md")]
    mod symbolic {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/grassmann.md")]
    mod grassmann {}
    #[doc = include_str!("../../../book/src/measure.md")]
    mod measure {}
    #[doc = include_str!("../../../book/src/tangency.md")]
    mod tangency {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
