//! Serde adapter writing `None` as the string `"none"`, for formats without null.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr<T> {
    Value(T),
    Word(String),
}

pub fn serialize<S: Serializer, T: Serialize>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => x.serialize(s),
        None => s.serialize_str("none"),
    }
}

pub fn deserialize<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> Result<Option<T>, D::Error> {
    match Repr::<T>::deserialize(d)? {
        Repr::Value(v) => Ok(Some(v)),
        Repr::Word(w) if w == "none" => Ok(None),
        Repr::Word(w) => Err(D::Error::custom(format!("expected a value or \"none\", found {w:?}"))),
    }
}
