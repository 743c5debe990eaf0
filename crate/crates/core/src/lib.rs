pub mod abstract_sem;
pub mod certificate;
pub mod concrete_sem;
pub mod extended_sem;
pub mod gen;
pub mod labels;
pub mod machine;
pub mod oracle;
pub mod par;
pub mod syntax;
