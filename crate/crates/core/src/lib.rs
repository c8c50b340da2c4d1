pub mod analysis;
pub mod baselines;
pub mod carbon;
pub mod config;
pub mod devices;
pub mod dispatch;
pub mod dst;
pub mod milp;
pub mod uncertainty;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/sequences.md")]
    mod sequences {}
    #[doc = include_str!("../../../book/src/chance.md")]
    mod chance {}
    #[doc = include_str!("../../../book/src/carbon.md")]
    mod carbon {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
