//! Query plans, their execution over an in-memory [`Table`], SQL rendering
//! and a guarded parser for the SQL subset accepted from the fallback model.
//!
//! [`Table`]: crate::ingest::Table

mod build;
mod exec;
mod plan;
mod sql;
mod validate;

pub use build::{build_partial_plan, build_plan};
pub use exec::{execute, ResultSet, Shape};
pub use plan::{
    AggFn, Aggregate, Direction, Filter, FilterOp, GroupBy, GroupPost, OrderBy, OrderKey, Projection,
    QueryPlan,
};
pub use sql::{parse_sql, render_sql, RenderedSql, SqlError};
pub use validate::{coerce_literal, validate_plan, PlanError};
