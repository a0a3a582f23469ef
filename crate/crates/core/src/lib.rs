//! Training and state-space division analysis of small continuous-control
//! policy networks on the double-integrator plant.
//!
//! The crate is organized bottom-up:
//!
//! * [`net`]: multilayer perceptrons with reverse-mode gradients and a text
//!   weight format.
//! * [`env`]: the plant `ṗ = v, v̇ = a`, rollouts and trajectory metrics.
//! * [`oracle`]: the time-optimal bang-bang baseline.
//! * [`division`]: division lines, regions, strips, significance, practical
//!   division lines and dead zones of simplified tanh policies.
//! * [`train`]: DDPG-style and PPO trainers.
//! * [`raster`], [`report`] and [`cli`]: state-action images, analysis
//!   reports and the `divider` command.
//!
//! ```
//! use divider::{division, net, State};
//!
//! let policy = net::constructed_example();
//! let rho = division::significance(&policy, 0).unwrap();
//! assert!((rho - 1.8978).abs() < 1e-3);
//! assert_eq!(policy.forward(State::new(0.0, 0.0)).unwrap(), 0.0);
//! ```

pub mod cli;
pub mod division;
pub mod env;
pub mod net;
pub mod oracle;
pub mod raster;
pub mod report;
mod textio;
pub mod train;

pub use env::{Controller, State};
pub use net::PolicyNet;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/division-lines.md")]
    mod division_lines {}
    #[doc = include_str!("../../../book/src/strips.md")]
    mod strips {}
    #[doc = include_str!("../../../book/src/bang-bang.md")]
    mod bang_bang {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
