//! Structural Solidity types and the type-family lattice operations.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::frontend::TypeExpr;

/// Coarse classification used by rule families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeClass {
    Bool,
    Int,
    Byte,
    Address,
    Str,
    Bytes,
    Array,
    Tuple,
    Mapping,
    Callable,
}

impl TypeClass {
    pub const ALL: [TypeClass; 10] = [
        TypeClass::Bool,
        TypeClass::Int,
        TypeClass::Byte,
        TypeClass::Address,
        TypeClass::Str,
        TypeClass::Bytes,
        TypeClass::Array,
        TypeClass::Tuple,
        TypeClass::Mapping,
        TypeClass::Callable,
    ];

    fn bit(self) -> u16 {
        1 << (self as u16)
    }

    pub fn name(self) -> &'static str {
        match self {
            TypeClass::Bool => "bool",
            TypeClass::Int => "int",
            TypeClass::Byte => "byte",
            TypeClass::Address => "address",
            TypeClass::Str => "str",
            TypeClass::Bytes => "bytes",
            TypeClass::Array => "array",
            TypeClass::Tuple => "tuple",
            TypeClass::Mapping => "mapping",
            TypeClass::Callable => "callable",
        }
    }
}

/// A set of type classes, written `{bool, int}` in rule premises.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Family(u16);

impl Family {
    pub const EMPTY: Family = Family(0);
    pub const BOOL: Family = Family(1 << TypeClass::Bool as u16);
    pub const BOOL_INT: Family = Family((1 << TypeClass::Bool as u16) | (1 << TypeClass::Int as u16));
    pub const BOOL_INT_BYTE: Family =
        Family((1 << TypeClass::Bool as u16) | (1 << TypeClass::Int as u16) | (1 << TypeClass::Byte as u16));
    pub const ORDERED: Family =
        Family((1 << TypeClass::Int as u16) | (1 << TypeClass::Byte as u16) | (1 << TypeClass::Address as u16));
    pub const STR_BYTES: Family = Family((1 << TypeClass::Str as u16) | (1 << TypeClass::Bytes as u16));
    pub const ITERABLE: Family = Family(
        (1 << TypeClass::Str as u16) | (1 << TypeClass::Bytes as u16) | (1 << TypeClass::Byte as u16) | (1 << TypeClass::Array as u16),
    );
    pub const INDEXABLE: Family = Family(
        (1 << TypeClass::Str as u16)
            | (1 << TypeClass::Bytes as u16)
            | (1 << TypeClass::Byte as u16)
            | (1 << TypeClass::Array as u16)
            | (1 << TypeClass::Mapping as u16),
    );
    pub const INT: Family = Family(1 << TypeClass::Int as u16);
    pub const CALLABLE: Family = Family(1 << TypeClass::Callable as u16);
    pub const ALL: Family = Family((1 << 10) - 1);

    pub fn of(classes: &[TypeClass]) -> Family {
        Family(classes.iter().fold(0, |acc, c| acc | c.bit()))
    }

    pub fn contains(self, c: TypeClass) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn intersect(self, other: Family) -> Family {
        Family(self.0 & other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn classes(self) -> impl Iterator<Item = TypeClass> {
        TypeClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.classes().map(TypeClass::name).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SolType {
    Bool,
    Int { bits: u16, signed: bool },
    Address { payable: bool },
    FixedBytes(u8),
    DynBytes,
    String,
    Array(Box<SolType>, Option<u64>),
    Mapping(Box<SolType>, Box<SolType>),
    Tuple(Vec<SolType>),
    Callable(Vec<SolType>, Box<SolType>),
    /// Lattice top: nothing known.
    Unknown,
    /// Nothing known except membership in a family.
    Constrained(Family),
    /// Failure element.
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("type `{0}` is not indexable")]
    NotIndexable(SolType),
    #[error("type `{0}` is not callable")]
    NotCallable(SolType),
}

impl SolType {
    pub const UINT256: SolType = SolType::Int { bits: 256, signed: false };
    pub const ADDRESS: SolType = SolType::Address { payable: false };

    pub fn uint(bits: u16) -> SolType {
        SolType::Int { bits, signed: false }
    }

    pub fn class(&self) -> Option<TypeClass> {
        Some(match self {
            SolType::Bool => TypeClass::Bool,
            SolType::Int { .. } => TypeClass::Int,
            SolType::Address { .. } => TypeClass::Address,
            SolType::FixedBytes(_) => TypeClass::Byte,
            SolType::DynBytes => TypeClass::Bytes,
            SolType::String => TypeClass::Str,
            SolType::Array(..) => TypeClass::Array,
            SolType::Mapping(..) => TypeClass::Mapping,
            SolType::Tuple(_) => TypeClass::Tuple,
            SolType::Callable(..) => TypeClass::Callable,
            SolType::Unknown | SolType::Constrained(_) | SolType::Bottom => return None,
        })
    }

    /// Unknown or family-constrained: no concrete information.
    pub fn is_open(&self) -> bool {
        matches!(self, SolType::Unknown | SolType::Constrained(_))
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, SolType::Bottom)
    }

    pub fn is_elementary(&self) -> bool {
        matches!(
            self,
            SolType::Bool | SolType::Int { .. } | SolType::Address { .. } | SolType::FixedBytes(_) | SolType::DynBytes | SolType::String
        )
    }

    /// Parses a type written in pseudocode or edit JSON. Unrecognized names
    /// yield `None`.
    pub fn parse(text: &str) -> Option<SolType> {
        let t = text.trim();
        if t.is_empty() {
            return None;
        }
        if let Some(inner) = t.strip_prefix("mapping") {
            let inner = inner.trim().strip_prefix('(')?.strip_suffix(')')?;
            let arrow = find_top_level(inner, "=>")?;
            let key = SolType::parse(&inner[..arrow])?;
            let value = SolType::parse(&inner[arrow + 2..])?;
            return Some(SolType::Mapping(Box::new(key), Box::new(value)));
        }
        if t.ends_with(']') {
            let open = matching_open_bracket(t)?;
            let elem = SolType::parse(&t[..open])?;
            let len = t[open + 1..t.len() - 1].trim();
            let len = if len.is_empty() { None } else { Some(len.parse().ok()?) };
            return Some(SolType::Array(Box::new(elem), len));
        }
        if let Some(inner) = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
            if inner.trim().is_empty() {
                return Some(SolType::Tuple(Vec::new()));
            }
            let parts = split_top_level(inner, ',');
            return parts.iter().map(|p| SolType::parse(p)).collect::<Option<Vec<_>>>().map(SolType::Tuple);
        }
        let words: Vec<&str> = t.split_whitespace().collect();
        match words.as_slice() {
            ["address", "payable"] => return Some(SolType::Address { payable: true }),
            [_] => {}
            _ => return None,
        }
        Some(match t {
            "bool" => SolType::Bool,
            "address" => SolType::ADDRESS,
            "string" => SolType::String,
            "bytes" => SolType::DynBytes,
            "byte" => SolType::FixedBytes(1),
            "uint" => SolType::UINT256,
            "int" => SolType::Int { bits: 256, signed: true },
            "unknown" => SolType::Unknown,
            _ => {
                if let Some(n) = t.strip_prefix("uint") {
                    let bits: u16 = n.parse().ok()?;
                    (bits.is_multiple_of(8) && (8..=256).contains(&bits)).then_some(SolType::Int { bits, signed: false })?
                } else if let Some(n) = t.strip_prefix("int") {
                    let bits: u16 = n.parse().ok()?;
                    (bits.is_multiple_of(8) && (8..=256).contains(&bits)).then_some(SolType::Int { bits, signed: true })?
                } else {
                    let n = t.strip_prefix("bytes")?;
                    let len: u8 = n.parse().ok()?;
                    (1..=32).contains(&len).then_some(SolType::FixedBytes(len))?
                }
            }
        })
    }

    pub fn from_type_expr(ty: &TypeExpr) -> SolType {
        match ty {
            TypeExpr::Named(n) => SolType::parse(n).unwrap_or(SolType::Unknown),
            TypeExpr::AddressPayable => SolType::Address { payable: true },
            TypeExpr::Mapping(k, v) => SolType::Mapping(Box::new(SolType::from_type_expr(k)), Box::new(SolType::from_type_expr(v))),
            TypeExpr::Array(elem, len) => {
                SolType::Array(Box::new(SolType::from_type_expr(elem)), len.as_ref().and_then(|l| l.parse().ok()))
            }
        }
    }

    /// A representative of every variant, used for exhaustive table checks.
    pub fn samples() -> Vec<SolType> {
        vec![
            SolType::Bool,
            SolType::uint(8),
            SolType::UINT256,
            SolType::Int { bits: 128, signed: true },
            SolType::ADDRESS,
            SolType::Address { payable: true },
            SolType::FixedBytes(1),
            SolType::FixedBytes(32),
            SolType::DynBytes,
            SolType::String,
            SolType::Array(Box::new(SolType::UINT256), None),
            SolType::Array(Box::new(SolType::ADDRESS), Some(3)),
            SolType::Mapping(Box::new(SolType::FixedBytes(32)), Box::new(SolType::UINT256)),
            SolType::Tuple(vec![SolType::Bool, SolType::UINT256]),
            SolType::Callable(vec![SolType::DynBytes], Box::new(SolType::FixedBytes(32))),
            SolType::Unknown,
            SolType::Constrained(Family::BOOL_INT),
            SolType::Bottom,
        ]
    }
}

fn find_top_level(s: &str, pat: &str) -> Option<usize> {
    let mut depth = 0i32;
    let bytes = s.as_bytes();
    for i in 0..bytes.len() {
        match bytes[i] {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            _ => {}
        }
        if depth == 0 && s[i..].starts_with(pat) {
            return Some(i);
        }
    }
    None
}

fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn matching_open_bracket(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices().rev() {
        match c {
            ']' => depth += 1,
            '[' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

impl fmt::Display for SolType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolType::Bool => f.write_str("bool"),
            SolType::Int { bits, signed: false } => write!(f, "uint{bits}"),
            SolType::Int { bits, signed: true } => write!(f, "int{bits}"),
            SolType::Address { payable: false } => f.write_str("address"),
            SolType::Address { payable: true } => f.write_str("address payable"),
            SolType::FixedBytes(n) => write!(f, "bytes{n}"),
            SolType::DynBytes => f.write_str("bytes"),
            SolType::String => f.write_str("string"),
            SolType::Array(elem, None) => write!(f, "{elem}[]"),
            SolType::Array(elem, Some(n)) => write!(f, "{elem}[{n}]"),
            SolType::Mapping(k, v) => write!(f, "mapping({k}=>{v})"),
            SolType::Tuple(items) => {
                write!(f, "(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            SolType::Callable(params, ret) => {
                write!(f, "function(")?;
                for (i, t) in params.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ") returns ({ret})")
            }
            SolType::Unknown => f.write_str("unknown"),
            SolType::Constrained(fam) => write!(f, "unknown{fam}"),
            SolType::Bottom => f.write_str("bottom"),
        }
    }
}

impl Serialize for SolType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Keeps `t` when its class is in the family.
pub fn meet(t: &SolType, family: Family) -> SolType {
    match t {
        SolType::Bottom => SolType::Bottom,
        SolType::Unknown => SolType::Constrained(family),
        SolType::Constrained(g) => {
            let h = g.intersect(family);
            if h.is_empty() {
                SolType::Bottom
            } else {
                SolType::Constrained(h)
            }
        }
        concrete => match concrete.class() {
            Some(c) if family.contains(c) => concrete.clone(),
            _ => SolType::Bottom,
        },
    }
}

/// Common arithmetic type of two numeric operands.
pub fn more_precise(a: &SolType, b: &SolType) -> SolType {
    match (a, b) {
        (SolType::Bottom, _) | (_, SolType::Bottom) => SolType::Bottom,
        (SolType::Constrained(f), SolType::Constrained(g)) => meet(&SolType::Constrained(*f), *g),
        (SolType::Unknown, other) | (other, SolType::Unknown) => other.clone(),
        (SolType::Constrained(f), other) | (other, SolType::Constrained(f)) => meet(other, *f),
        (SolType::Int { bits: x, signed: s }, SolType::Int { bits: y, signed: t }) if s == t => {
            SolType::Int { bits: (*x).max(*y), signed: *s }
        }
        (SolType::Bool, SolType::Bool) => SolType::Bool,
        _ => SolType::Bottom,
    }
}

pub fn element_type(t: &SolType) -> Result<SolType, TypeError> {
    match t {
        SolType::Array(elem, _) => Ok((**elem).clone()),
        SolType::DynBytes | SolType::FixedBytes(_) | SolType::String => Ok(SolType::FixedBytes(1)),
        SolType::Mapping(_, v) => Ok((**v).clone()),
        SolType::Unknown | SolType::Constrained(_) => Ok(SolType::Unknown),
        other => Err(TypeError::NotIndexable(other.clone())),
    }
}

pub fn return_type(t: &SolType) -> Result<SolType, TypeError> {
    match t {
        SolType::Callable(_, ret) => Ok((**ret).clone()),
        SolType::Unknown | SolType::Constrained(_) => Ok(SolType::Unknown),
        other => Err(TypeError::NotCallable(other.clone())),
    }
}

/// Implicit conversion between non-literal values.
pub fn convertible(from: &SolType, to: &SolType) -> bool {
    if from == to {
        return true;
    }
    match (from, to) {
        (SolType::Bottom, _) | (_, SolType::Bottom) => false,
        (SolType::Unknown, _) | (_, SolType::Unknown) => true,
        (SolType::Constrained(f), t) | (t, SolType::Constrained(f)) => t.class().is_none_or(|c| f.contains(c)),
        (SolType::Int { bits: a, signed: s }, SolType::Int { bits: b, signed: t }) => s == t && a <= b,
        (SolType::FixedBytes(a), SolType::FixedBytes(b)) => a <= b,
        (SolType::Address { payable: true }, SolType::Address { payable: false }) => true,
        (SolType::Array(a, n), SolType::Array(b, m)) => n == m && convertible(a, b) && convertible(b, a),
        (SolType::Mapping(k1, v1), SolType::Mapping(k2, v2)) => {
            convertible(k1, k2) && convertible(k2, k1) && convertible(v1, v2) && convertible(v2, v1)
        }
        (SolType::Tuple(a), SolType::Tuple(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| convertible(x, y)),
        _ => false,
    }
}

/// Type both operands convert to, if any.
pub fn common_type(a: &SolType, b: &SolType) -> SolType {
    if a.is_open() && b.is_open() {
        return match (a, b) {
            (SolType::Constrained(f), SolType::Constrained(g)) => meet(&SolType::Constrained(*f), *g),
            (SolType::Constrained(_), _) => a.clone(),
            _ => b.clone(),
        };
    }
    if a.is_open() {
        return if convertible(a, b) { b.clone() } else { SolType::Bottom };
    }
    if b.is_open() {
        return if convertible(b, a) { a.clone() } else { SolType::Bottom };
    }
    if convertible(a, b) {
        b.clone()
    } else if convertible(b, a) {
        a.clone()
    } else {
        SolType::Bottom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for text in ["uint256", "int8", "address payable", "bytes32", "mapping(bytes32=>uint256)", "uint256[]", "address[3]", "(bool, uint8)", "string", "bytes"] {
            assert_eq!(SolType::parse(text).unwrap().to_string(), text);
        }
        assert_eq!(SolType::parse("uint").unwrap(), SolType::UINT256);
        assert_eq!(SolType::parse("byte").unwrap(), SolType::FixedBytes(1));
        assert_eq!(SolType::parse("mapping (bytes32 => mapping(address=>uint256))").unwrap().to_string(), "mapping(bytes32=>mapping(address=>uint256))");
        assert!(SolType::parse("uint7").is_none());
        assert!(SolType::parse("bytes33").is_none());
        assert!(SolType::parse("Treasury").is_none());
    }

    #[test]
    fn meet_examples() {
        assert_eq!(meet(&SolType::UINT256, Family::BOOL_INT), SolType::UINT256);
        assert_eq!(meet(&SolType::String, Family::BOOL_INT), SolType::Bottom);
        assert_eq!(meet(&SolType::Unknown, Family::BOOL_INT_BYTE), SolType::Constrained(Family::BOOL_INT_BYTE));
    }

    #[test]
    fn more_precise_examples() {
        assert_eq!(more_precise(&SolType::uint(8), &SolType::UINT256), SolType::UINT256);
        assert_eq!(more_precise(&SolType::Unknown, &SolType::Int { bits: 128, signed: true }), SolType::Int { bits: 128, signed: true });
        assert_eq!(more_precise(&SolType::uint(8), &SolType::Int { bits: 8, signed: true }), SolType::Bottom);
    }

    #[test]
    fn element_and_return_types() {
        assert_eq!(element_type(&SolType::Array(Box::new(SolType::UINT256), None)).unwrap(), SolType::UINT256);
        assert_eq!(element_type(&SolType::parse("mapping(bytes32=>uint256)").unwrap()).unwrap(), SolType::UINT256);
        assert!(matches!(element_type(&SolType::Bool), Err(TypeError::NotIndexable(_))));
        let keccak = SolType::Callable(vec![SolType::DynBytes], Box::new(SolType::FixedBytes(32)));
        assert_eq!(return_type(&keccak).unwrap(), SolType::FixedBytes(32));
        assert_eq!(return_type(&SolType::Unknown).unwrap(), SolType::Unknown);
        assert!(matches!(return_type(&SolType::UINT256), Err(TypeError::NotCallable(_))));
    }

    #[test]
    fn conversions() {
        assert!(convertible(&SolType::uint(8), &SolType::UINT256));
        assert!(!convertible(&SolType::UINT256, &SolType::uint(8)));
        assert!(!convertible(&SolType::FixedBytes(32), &SolType::UINT256));
        assert!(convertible(&SolType::Address { payable: true }, &SolType::ADDRESS));
        assert!(convertible(&SolType::Unknown, &SolType::String));
    }
}
