#pragma once

#include <cmath>

namespace vesselcomm {

struct Vec3
{
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3& operator+=(Vec3 const& o)
    {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr Vec3& operator-=(Vec3 const& o)
    {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }
    constexpr Vec3& operator*=(double s)
    {
        x *= s;
        y *= s;
        z *= s;
        return *this;
    }

    friend constexpr Vec3 operator+(Vec3 a, Vec3 const& b) { return a += b; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 const& b) { return a -= b; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend constexpr bool operator==(Vec3 const&, Vec3 const&) = default;
};

constexpr double dot(Vec3 const& a, Vec3 const& b)
{
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline double norm(Vec3 const& v)
{
    return std::sqrt(dot(v, v));
}

/// Distance of a point from the vessel axis (the z axis).
inline double radial_distance(Vec3 const& v)
{
    return std::sqrt(v.x * v.x + v.y * v.y);
}

}  // namespace vesselcomm
