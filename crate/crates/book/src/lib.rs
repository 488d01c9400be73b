//! Guide chapters, compiled so their snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/channel.md")]
pub mod channel {}

#[doc = include_str!("../../../book/src/sounding.md")]
pub mod sounding {}

#[doc = include_str!("../../../book/src/acquisition.md")]
pub mod acquisition {}

#[doc = include_str!("../../../book/src/tracking.md")]
pub mod tracking {}

#[doc = include_str!("../../../book/src/detection.md")]
pub mod detection {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
