pub mod config;
pub mod critical;
pub mod error;
pub mod julia;
pub mod lab;
pub mod map;
pub mod measure;
pub mod periodic;
pub mod pullback;
pub mod registry;
pub mod report;
pub mod rng;
pub mod roots;
pub mod scaling;
pub mod sphere;

pub use error::{LabError, Result};
pub use map::RationalMap;
pub use sphere::{chordal_distance, SphereBall, SpherePoint};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/sphere_and_maps.md")]
    pub mod sphere_and_maps {}
    #[doc = include_str!("../../../book/src/measure.md")]
    pub mod measure {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    pub mod scaling {}
    #[doc = include_str!("../../../book/src/periodic.md")]
    pub mod periodic {}
    #[doc = include_str!("../../../book/src/pullback.md")]
    pub mod pullback {}
    #[doc = include_str!("../../../book/src/julia.md")]
    pub mod julia {}
    #[doc = include_str!("../../../book/src/lab.md")]
    pub mod lab {}
}
