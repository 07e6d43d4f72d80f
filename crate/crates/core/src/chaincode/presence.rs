//! Driver-side bookkeeping of who is in the vehicle.
//!
//! Co-rider events are recorded only into the requests of riders who are
//! on board when the event happens. A rider picked up after someone else's
//! dropoff never sees that dropoff, and vice versa.

use crate::chaincode::geo::GeoPoint;
use crate::chaincode::records::{request_key, CoriderKind};
use crate::identity::UserId;

/// One `setCoriderInformation` invocation the driver must make.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoriderCall {
    /// Temporal key of the rider whose request receives the event.
    pub rider_key: String,
    pub corider: UserId,
    pub location: GeoPoint,
    pub kind: CoriderKind,
}

impl CoriderCall {
    pub fn args(&self) -> Vec<String> {
        vec![
            self.rider_key.clone(),
            self.corider.to_string(),
            self.location.to_string(),
            self.kind.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Default)]
pub struct PresenceTracker {
    on_board: Vec<UserId>,
}

impl PresenceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_board(&self) -> &[UserId] {
        &self.on_board
    }

    pub fn is_on_board(&self, rider: &UserId) -> bool {
        self.on_board.contains(rider)
    }

    fn notify(&self, subject: &UserId, location: GeoPoint, kind: CoriderKind) -> Vec<CoriderCall> {
        self.on_board
            .iter()
            .filter(|r| *r != subject)
            .map(|r| CoriderCall {
                rider_key: request_key(r),
                corider: subject.clone(),
                location,
                kind,
            })
            .collect()
    }

    /// Marks `rider` as boarded and returns the calls that tell everyone
    /// already aboard. Issue them after the rider's own pickup commits.
    pub fn pickup(&mut self, rider: &UserId, location: GeoPoint) -> Vec<CoriderCall> {
        let calls = self.notify(rider, location, CoriderKind::Pickup);
        if !self.is_on_board(rider) {
            self.on_board.push(rider.clone());
        }
        calls
    }

    /// Removes `rider` and returns the calls for those who stay aboard.
    /// Issue them before the rider's own dropoff, while the leaving rider's
    /// request is still `picked_up`.
    pub fn dropoff(&mut self, rider: &UserId, location: GeoPoint) -> Vec<CoriderCall> {
        let calls = self.notify(rider, location, CoriderKind::Dropoff);
        self.on_board.retain(|r| r != rider);
        calls
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(s: &str) -> UserId {
        s.parse().unwrap()
    }

    #[test]
    fn only_present_riders_are_notified() {
        let here = GeoPoint::new(36.16, -86.78).unwrap();
        let mut t = PresenceTracker::new();
        assert!(t.pickup(&u("b@Org1"), here).is_empty());
        let calls = t.pickup(&u("c@Org1"), here);
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].rider_key, "rideRequest:b@Org1");
        assert_eq!(calls[0].corider, u("c@Org1"));
        let calls = t.dropoff(&u("b@Org1"), here);
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].rider_key, "rideRequest:c@Org1");
        assert_eq!(calls[0].kind, CoriderKind::Dropoff);
        assert!(t.pickup(&u("d@Org1"), here).iter().all(|c| c.rider_key != "rideRequest:b@Org1"));
    }
}
