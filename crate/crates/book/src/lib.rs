//! Code listings of the guide in `book/`, compiled and run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/permeability.md")]
mod permeability {}

#[doc = include_str!("../../../book/src/material-law.md")]
mod material_law {}

#[doc = include_str!("../../../book/src/discretization.md")]
mod discretization {}

#[doc = include_str!("../../../book/src/time-stepping.md")]
mod time_stepping {}

#[doc = include_str!("../../../book/src/convolution.md")]
mod convolution {}

#[doc = include_str!("../../../book/src/verification.md")]
mod verification {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
