//! Domain types for listings and panel cells.
//!
//! String codes are the canonical spellings used in the delimited files the
//! toolkit reads and writes; parsing is case-insensitive and tolerates
//! spaces/underscores in place of hyphens so hand-edited files load.

use crate::error::{Error, Result};
use crate::time::WeekKey;
use chrono::NaiveDate;
use std::fmt;

/// Which observation stage a dataset comes from: all adverts, the brokered
/// subset with an agreed transaction, or the registered deeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatasetTag {
    Adverts,
    BrokeredAdverts,
    Deeds,
}

impl DatasetTag {
    pub const ALL: [DatasetTag; 3] = [
        DatasetTag::Adverts,
        DatasetTag::BrokeredAdverts,
        DatasetTag::Deeds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::Adverts => "adverts",
            DatasetTag::BrokeredAdverts => "brokered-adverts",
            DatasetTag::Deeds => "deeds",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match norm(s).as_str() {
            "adverts" => Ok(DatasetTag::Adverts),
            "brokered-adverts" | "brokered" => Ok(DatasetTag::BrokeredAdverts),
            "deeds" => Ok(DatasetTag::Deeds),
            _ => Err(Error::Config(format!("unknown dataset tag '{s}'"))),
        }
    }

    /// Deeds carry no hedonic attributes; the other two stages must.
    pub fn requires_hedonics(self) -> bool {
        !matches!(self, DatasetTag::Deeds)
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The nine federal states, in the customary order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum State {
    Burgenland,
    Carinthia,
    LowerAustria,
    UpperAustria,
    Salzburg,
    Styria,
    Tyrol,
    Vorarlberg,
    Vienna,
}

impl State {
    pub const ALL: [State; 9] = [
        State::Burgenland,
        State::Carinthia,
        State::LowerAustria,
        State::UpperAustria,
        State::Salzburg,
        State::Styria,
        State::Tyrol,
        State::Vorarlberg,
        State::Vienna,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            State::Burgenland => "Burgenland",
            State::Carinthia => "Carinthia",
            State::LowerAustria => "LowerAustria",
            State::UpperAustria => "UpperAustria",
            State::Salzburg => "Salzburg",
            State::Styria => "Styria",
            State::Tyrol => "Tyrol",
            State::Vorarlberg => "Vorarlberg",
            State::Vienna => "Vienna",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match norm(s).as_str() {
            "burgenland" => Ok(State::Burgenland),
            "carinthia" => Ok(State::Carinthia),
            "lower-austria" | "loweraustria" => Ok(State::LowerAustria),
            "upper-austria" | "upperaustria" => Ok(State::UpperAustria),
            "salzburg" => Ok(State::Salzburg),
            "styria" => Ok(State::Styria),
            "tyrol" => Ok(State::Tyrol),
            "vorarlberg" => Ok(State::Vorarlberg),
            "vienna" => Ok(State::Vienna),
            _ => Err(Error::Config(format!("unknown state '{s}'"))),
        }
    }

    /// Position in [`State::ALL`]; used as a stable group index.
    pub fn index(self) -> usize {
        State::ALL.iter().position(|s| *s == self).expect("state is in ALL")
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Four-level urban-rural classification of a district.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UrbanClass {
    Urban,
    LargelyUrban,
    Regional,
    Rural,
}

impl UrbanClass {
    pub const ALL: [UrbanClass; 4] = [
        UrbanClass::Urban,
        UrbanClass::LargelyUrban,
        UrbanClass::Regional,
        UrbanClass::Rural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UrbanClass::Urban => "urban",
            UrbanClass::LargelyUrban => "largely-urban",
            UrbanClass::Regional => "regional",
            UrbanClass::Rural => "rural",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match norm(s).as_str() {
            "urban" => Ok(UrbanClass::Urban),
            "largely-urban" => Ok(UrbanClass::LargelyUrban),
            "regional" => Ok(UrbanClass::Regional),
            "rural" => Ok(UrbanClass::Rural),
            _ => Err(Error::Config(format!("unknown urban class '{s}'"))),
        }
    }
}

impl fmt::Display for UrbanClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a listing sits: state, district within the state, the district's
/// urban-rural class, and a 1..=5 accessibility level (1 = best served).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocationKey {
    pub state: State,
    pub district: String,
    pub urban_class: UrbanClass,
    pub accessibility: u8,
}

impl LocationKey {
    pub fn new(state: State, district: impl Into<String>, urban_class: UrbanClass, accessibility: u8) -> Result<Self> {
        if !(1..=5).contains(&accessibility) {
            return Err(Error::Config(format!(
                "accessibility level {accessibility} outside 1..=5"
            )));
        }
        Ok(LocationKey { state, district: district.into(), urban_class, accessibility })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DwellingType {
    House,
    Apartment,
}

impl DwellingType {
    pub const ALL: [DwellingType; 2] = [DwellingType::House, DwellingType::Apartment];

    pub fn as_str(self) -> &'static str {
        match self {
            DwellingType::House => "house",
            DwellingType::Apartment => "apartment",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match norm(s).as_str() {
            "house" => Ok(DwellingType::House),
            "apartment" | "flat" => Ok(DwellingType::Apartment),
            _ => Err(Error::Config(format!("unknown dwelling type '{s}'"))),
        }
    }
}

impl fmt::Display for DwellingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Room count, top-coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rooms {
    One,
    Two,
    Three,
    MoreThanThree,
}

impl Rooms {
    pub const ALL: [Rooms; 4] = [Rooms::One, Rooms::Two, Rooms::Three, Rooms::MoreThanThree];

    pub fn as_str(self) -> &'static str {
        match self {
            Rooms::One => "1",
            Rooms::Two => "2",
            Rooms::Three => "3",
            Rooms::MoreThanThree => ">3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Rooms::One),
            "2" => Ok(Rooms::Two),
            "3" => Ok(Rooms::Three),
            ">3" | "4+" => Ok(Rooms::MoreThanThree),
            _ => Err(Error::Config(format!("unknown room class '{s}'"))),
        }
    }
}

/// Eight-level construction-age classification, youngest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeClass {
    New,
    Y1to10,
    Y11to20,
    Y21to30,
    Y31to50,
    Y51to70,
    Y71to100,
    Over100,
}

impl AgeClass {
    pub const ALL: [AgeClass; 8] = [
        AgeClass::New,
        AgeClass::Y1to10,
        AgeClass::Y11to20,
        AgeClass::Y21to30,
        AgeClass::Y31to50,
        AgeClass::Y51to70,
        AgeClass::Y71to100,
        AgeClass::Over100,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgeClass::New => "new",
            AgeClass::Y1to10 => "1-10",
            AgeClass::Y11to20 => "11-20",
            AgeClass::Y21to30 => "21-30",
            AgeClass::Y31to50 => "31-50",
            AgeClass::Y51to70 => "51-70",
            AgeClass::Y71to100 => "71-100",
            AgeClass::Over100 => ">100",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match norm(s).as_str() {
            "new" => Ok(AgeClass::New),
            "1-10" => Ok(AgeClass::Y1to10),
            "11-20" => Ok(AgeClass::Y11to20),
            "21-30" => Ok(AgeClass::Y21to30),
            "31-50" => Ok(AgeClass::Y31to50),
            "51-70" => Ok(AgeClass::Y51to70),
            "71-100" => Ok(AgeClass::Y71to100),
            ">100" | "over-100" => Ok(AgeClass::Over100),
            _ => Err(Error::Config(format!("unknown age class '{s}'"))),
        }
    }
}

/// Private open space attached to the dwelling (balcony, terrace, garden).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpenSpace {
    None,
    UpTo15m2,
    Over15m2,
}

impl OpenSpace {
    pub const ALL: [OpenSpace; 3] = [OpenSpace::None, OpenSpace::UpTo15m2, OpenSpace::Over15m2];

    pub fn as_str(self) -> &'static str {
        match self {
            OpenSpace::None => "none",
            OpenSpace::UpTo15m2 => "up-to-15",
            OpenSpace::Over15m2 => "over-15",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match norm(s).as_str() {
            "none" => Ok(OpenSpace::None),
            "up-to-15" | "<=15" => Ok(OpenSpace::UpTo15m2),
            "over-15" | ">15" => Ok(OpenSpace::Over15m2),
            _ => Err(Error::Config(format!("unknown open-space class '{s}'"))),
        }
    }
}

/// Advertised condition of the dwelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    FirstOccupancy,
    AsNew,
    Poor,
    Unclassified,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::FirstOccupancy,
        Condition::AsNew,
        Condition::Poor,
        Condition::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::FirstOccupancy => "first-occupancy",
            Condition::AsNew => "as-new",
            Condition::Poor => "poor",
            Condition::Unclassified => "unclassified",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match norm(s).as_str() {
            "first-occupancy" => Ok(Condition::FirstOccupancy),
            "as-new" => Ok(Condition::AsNew),
            "poor" => Ok(Condition::Poor),
            "unclassified" | "" => Ok(Condition::Unclassified),
            _ => Err(Error::Config(format!("unknown condition '{s}'"))),
        }
    }
}

/// Hedonic attributes of a listed dwelling. Deeds records do not carry
/// these.
#[derive(Debug, Clone, PartialEq)]
pub struct HedonicProfile {
    /// Natural log of living area in square metres.
    pub log_area: f64,
    pub rooms: Rooms,
    pub age_class: AgeClass,
    pub renovated: bool,
    pub open_space: OpenSpace,
    pub basement: bool,
    pub parking: bool,
    pub air_conditioning: bool,
    pub step_free: bool,
    pub wellness: bool,
    pub condition: Condition,
    /// Natural log of the plot price; only meaningful for houses, coded
    /// zero in the design for records without one.
    pub log_plot_price: Option<f64>,
}

impl HedonicProfile {
    /// Living area in square metres.
    pub fn area_m2(&self) -> f64 {
        self.log_area.exp()
    }
}

/// One observed listing at one stage of the market.
#[derive(Debug, Clone, PartialEq)]
pub struct ListingRecord {
    /// Unique within a dataset.
    pub id: String,
    pub tag: DatasetTag,
    /// Transaction or asking price in euros; strictly positive.
    pub price_eur: f64,
    /// Advertisement date for adverts, agreement date for brokered adverts,
    /// registration date for deeds.
    pub observed_on: NaiveDate,
    pub dwelling: DwellingType,
    pub location: LocationKey,
    pub hedonics: Option<HedonicProfile>,
}

impl ListingRecord {
    pub fn log_price(&self) -> f64 {
        self.price_eur.ln()
    }

    /// Price per square metre of living area, if the record has an area.
    pub fn price_per_m2(&self) -> Option<f64> {
        self.hedonics.as_ref().map(|h| self.price_eur / h.area_m2())
    }
}

/// One cell of the weekly count panel: ISO week x dwelling type x state x
/// urban class, with the state's population as exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelCell {
    pub week: WeekKey,
    pub dwelling: DwellingType,
    pub state: State,
    pub urban_class: UrbanClass,
    pub count: u64,
    /// Persons; strictly positive.
    pub exposure: f64,
}

/// The enums serialize as their canonical string codes so configuration
/// files and sidecars read naturally.
macro_rules! impl_string_serde {
    ($ty:ident) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }
        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(
                deserializer: D,
            ) -> std::result::Result<Self, D::Error> {
                let s = <String as serde::Deserialize>::deserialize(deserializer)?;
                $ty::parse(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

impl_string_serde!(DatasetTag);
impl_string_serde!(State);
impl_string_serde!(UrbanClass);
impl_string_serde!(DwellingType);
impl_string_serde!(Rooms);
impl_string_serde!(AgeClass);
impl_string_serde!(OpenSpace);
impl_string_serde!(Condition);

/// Lowercases and squeezes separators so "Largely Urban", "largely_urban"
/// and "largely-urban" all parse alike.
fn norm(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| match c {
            ' ' | '_' => '-',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

/// Parses the bool spellings used in the delimited files.
pub(crate) fn parse_bool(s: &str) -> Result<bool> {
    match norm(s).as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(Error::Config(format!("unknown boolean value '{s}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_codes_round_trip() {
        for s in State::ALL {
            assert_eq!(State::parse(s.as_str()).unwrap(), s);
        }
        for u in UrbanClass::ALL {
            assert_eq!(UrbanClass::parse(u.as_str()).unwrap(), u);
        }
        for a in AgeClass::ALL {
            assert_eq!(AgeClass::parse(a.as_str()).unwrap(), a);
        }
        for r in Rooms::ALL {
            assert_eq!(Rooms::parse(r.as_str()).unwrap(), r);
        }
        for o in OpenSpace::ALL {
            assert_eq!(OpenSpace::parse(o.as_str()).unwrap(), o);
        }
        for c in Condition::ALL {
            assert_eq!(Condition::parse(c.as_str()).unwrap(), c);
        }
        for t in DatasetTag::ALL {
            assert_eq!(DatasetTag::parse(t.as_str()).unwrap(), t);
        }
    }

    #[test]
    fn parsing_is_forgiving_about_case_and_separators() {
        assert_eq!(State::parse("Lower Austria").unwrap(), State::LowerAustria);
        assert_eq!(State::parse("lower_austria").unwrap(), State::LowerAustria);
        assert_eq!(UrbanClass::parse("Largely Urban").unwrap(), UrbanClass::LargelyUrban);
        assert!(State::parse("Bavaria").is_err());
    }

    #[test]
    fn accessibility_is_bounded() {
        assert!(LocationKey::new(State::Vienna, "Wien-1", UrbanClass::Urban, 1).is_ok());
        assert!(LocationKey::new(State::Vienna, "Wien-1", UrbanClass::Urban, 0).is_err());
        assert!(LocationKey::new(State::Vienna, "Wien-1", UrbanClass::Urban, 6).is_err());
    }

    #[test]
    fn state_index_matches_order() {
        assert_eq!(State::Burgenland.index(), 0);
        assert_eq!(State::Vienna.index(), 8);
    }

    #[test]
    fn bool_spellings() {
        assert!(parse_bool("1").unwrap());
        assert!(parse_bool("Yes").unwrap());
        assert!(!parse_bool("false").unwrap());
        assert!(parse_bool("maybe").is_err());
    }
}
