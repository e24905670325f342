#pragma once

#include <optional>
#include <vector>

#include "slamesh/geometry.hpp"
#include "slamesh/gp.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

class MeshMap;

/// Triangulates a layer's grid. Each square (i,j)-(i+1,j)-(i,j+1)-(i+1,j+1)
/// is split along the (i,j)-(i+1,j+1) diagonal; a triangle is kept only if
/// its three vertices are valid. Indices are grid indices i*g + j and the
/// winding is counter-clockwise seen from the +axis side.
std::vector<Face> connect_layer(const Layer& layer, double sigma_match_sq);

/// Unit normal of (v0, v1, v2), oriented by winding. Throws DegenerateFace
/// when |(v1 - v0) x (v2 - v0)| <= 1e-12.
Vec3 face_normal(const Point3& v0, const Point3& v1, const Point3& v2);

/// True when vertex (i, j) is valid and at least one incident triangle is.
bool has_valid_incident_face(const Layer& layer, int i, int j, double sigma_match_sq);

/// Normalized sum of the unnormalized cross products of every valid triangle
/// incident to (i, j), flipped to face `sensor_origin`. Returns nullopt for an
/// invalid or isolated vertex.
std::optional<Vec3> try_smoothed_normal(const Layer& layer, int i, int j, double sigma_match_sq,
                                        const Point3& sensor_origin);

/// Throwing form of try_smoothed_normal (NoValidFace).
Vec3 smoothed_normal(const Layer& layer, int i, int j, double sigma_match_sq, const Point3& sensor_origin);

/// Collects every layer's valid vertices and faces into one indexed mesh in
/// (cell, axis, grid position) order. Border vertices of same-axis layers at
/// a shared location are merged when their positions agree within 1e-6 m.
TriangleMesh extract_mesh(const MeshMap& map, double sigma_match_sq);

/// Same as above for a loose list of layers (for example a reconstructed scan).
TriangleMesh extract_mesh(const std::vector<const Layer*>& layers, double sigma_match_sq);

}  // namespace slamesh
