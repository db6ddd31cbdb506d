pub mod gen;
pub mod ted_oracle;
