//! The guide chapters compile as doc-tests so the book's code snippets stay
//! in sync with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub struct GuideIntroduction;

#[doc = include_str!("../../../book/src/cost-beliefs.md")]
pub struct GuideCostBeliefs;

#[doc = include_str!("../../../book/src/demand-and-clipping.md")]
pub struct GuideDemandAndClipping;

#[doc = include_str!("../../../book/src/no-harm-gate.md")]
pub struct GuideNoHarmGate;

#[doc = include_str!("../../../book/src/environments.md")]
pub struct GuideEnvironments;

#[doc = include_str!("../../../book/src/text-proxies.md")]
pub struct GuideTextProxies;

#[doc = include_str!("../../../book/src/evaluation.md")]
pub struct GuideEvaluation;

#[doc = include_str!("../../../book/src/cli.md")]
pub struct GuideCli;
